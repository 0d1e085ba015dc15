"""Reverse-time integrators driven by a score provider and a steering policy.

Samplers walk a decreasing time grid from 1 - t_clip down to t_clip: uniform in
t for the stochastic samplers, uniform in signal/noise angle for the
deterministic ones (see ``Schedule.time_grid``). The batch is
split into fixed-size blocks and block ``b`` draws every random number from
its own stream seeded by ``(seed, b)``, so results do not depend on how many
workers integrate the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import rescale as rs
from .errors import ConfigurationError, ParameterError, PolicyMisuseError, UnsupportedScheduleError
from .schedule import FLOW, VP, Schedule

DDPM = "ddpm"
DDIM = "ddim"
EULER_ODE = "euler_ode"
EULER_SDE = "euler_sde"
KINDS = (DDPM, DDIM, EULER_ODE, EULER_SDE)
STOCHASTIC = (DDPM, EULER_SDE)
DEFAULT_STEPS = {DDPM: 1000, DDIM: 50, EULER_ODE: 100, EULER_SDE: 1000}
DEFAULT_GRID = {DDPM: "uniform", DDIM: "angle", EULER_ODE: "angle", EULER_SDE: "uniform"}

_ALIASES = {"eulerode": EULER_ODE, "euler-ode": EULER_ODE, "ode": EULER_ODE,
            "eulersde": EULER_SDE, "euler-sde": EULER_SDE, "sde": EULER_SDE}


def normalize_kind(kind: str) -> str:
    k = kind.lower()
    k = _ALIASES.get(k, k)
    if k not in KINDS:
        raise ConfigurationError(f"unknown sampler {kind!r}; choose from {', '.join(KINDS)}")
    return k


@dataclass(frozen=True)
class SamplerConfig:
    kind: str
    schedule: Schedule = field(default_factory=Schedule)
    steps: Optional[int] = None
    seed: int = 0
    batch: int = 1000
    dim: int = 1
    prior_scale: float = 1.0
    block: int = 4096
    grid: Optional[str] = None
    grid_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if self.steps is None:
            object.__setattr__(self, "steps", DEFAULT_STEPS[self.kind])
        if self.grid is None:
            object.__setattr__(self, "grid", DEFAULT_GRID[self.kind])
        if self.grid not in ("uniform", "angle"):
            raise ConfigurationError(f"unknown time grid {self.grid!r}")
        if int(self.steps) < 2:
            raise ConfigurationError("steps must be at least 2")
        if self.batch < 1 or self.dim < 1 or self.block < 1:
            raise ConfigurationError("batch, dim and block must be positive")
        if not self.prior_scale > 0:
            raise ConfigurationError("prior_scale must be positive")

    def to_dict(self) -> dict:
        return {
            "sampler": self.kind,
            "steps": int(self.steps),
            "seed": int(self.seed),
            "batch": int(self.batch),
            "dim": int(self.dim),
            "prior_scale": float(self.prior_scale),
            "block": int(self.block),
            "grid": self.grid,
            "grid_scale": float(self.grid_scale),
            "schedule": self.schedule.to_dict(),
        }


@dataclass
class SampleBatch:
    points: np.ndarray
    meta: dict

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def config_from_meta(meta: dict):
    """Rebuild (SamplerConfig, policy) from ``SampleBatch.meta``."""
    sched = Schedule(**meta["schedule"])
    cfg = SamplerConfig(
        meta["sampler"], sched, meta["steps"], meta["seed"], meta["batch"],
        meta["dim"], meta["prior_scale"], meta["block"], meta["grid"], meta["grid_scale"],
    )
    return cfg, rs.policy_from_dict(meta["policy"])


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(block_index)]))


def _blocks(config: SamplerConfig):
    for b, lo in enumerate(range(0, config.batch, config.block)):
        yield b, min(config.block, config.batch - lo)


def init_prior(config: SamplerConfig) -> np.ndarray:
    """Standard normal start points (times prior_scale), same draws ``run`` uses."""
    parts = [config.prior_scale * block_rng(config.seed, b).standard_normal((n, config.dim))
             for b, n in _blocks(config)]
    return np.concatenate(parts, axis=0)


def _model_score(field_, policy, x, schedule, t):
    """Raw model score, with CFG guidance folded in."""
    if isinstance(policy, rs.CFG):
        if not hasattr(field_, "conditional"):
            raise ConfigurationError("CFG needs a labelled mixture field")
        cond = field_.conditional(policy.cls).score(x, schedule, t)
        return rs.cfg_combine(cond, field_.score(x, schedule, t), policy.w)
    return field_.score(x, schedule, t)


def _score_policy(policy):
    """Policy to hand to the rescale functions; CNS and CFG leave predictions untouched."""
    return rs.NoRescale() if isinstance(policy, (rs.CNS, rs.CFG)) or policy is None else policy


def _noise_scale(policy) -> float:
    return rs.cns_noise_scale(policy.k) if isinstance(policy, rs.CNS) else 1.0


def _require_vp(schedule: Schedule, what: str) -> None:
    if schedule.kind != VP:
        raise UnsupportedScheduleError(f"{what} is implemented for the VP schedule only")


def _require_deterministic_policy(policy, what: str) -> None:
    if isinstance(policy, rs.CNS):
        raise PolicyMisuseError(f"CNS only applies to stochastic samplers, not {what}")


def euler_sde_step(x, t, dt, field_, policy, schedule: Schedule, rng: np.random.Generator):
    """One Euler-Maruyama step of the reverse VP SDE; ``dt`` < 0.

    CNS runs dx = [f x - (g^2/k)(k s)] dt + (g/sqrt(k)) dw, i.e. the drift is
    untouched and only the injected noise shrinks.
    """
    _require_vp(schedule, "the reverse SDE")
    if not dt < 0:
        raise ParameterError("reverse-time step needs dt < 0")
    s = rs.rescale_score(_score_policy(policy), _model_score(field_, policy, x, schedule, t), schedule, t)
    f, g = schedule.drift_diffusion(t)
    z = rng.standard_normal(x.shape)
    return x + (f * x - g**2 * s) * dt + _noise_scale(policy) * g * np.sqrt(-dt) * z


def _eps_and_x0(x, t, field_, policy, schedule):
    alpha, sigma = schedule.alpha_sigma(t)
    eps = -sigma * _model_score(field_, policy, x, schedule, t)
    eps = rs.rescale_epsilon(_score_policy(policy), eps, schedule, t)
    return eps, (x - sigma * eps) / alpha


def ddpm_step(x, t, t_next, field_, policy, schedule: Schedule, rng: np.random.Generator):
    """Ancestral step x_t -> x_{t_next} from the Gaussian posterior q(x_s | x_t, x0_hat)."""
    _require_vp(schedule, "DDPM")
    if not t_next < t:
        raise ParameterError("DDPM steps must decrease in time")
    _, x0 = _eps_and_x0(x, t, field_, policy, schedule)
    a_t, s_t = schedule.alpha_sigma(t)
    a_s, s_s = schedule.alpha_sigma(t_next)
    a_ts = a_t / a_s
    var_ts = s_t**2 - a_ts**2 * s_s**2
    mean = (a_s * var_ts / s_t**2) * x0 + (a_ts * s_s**2 / s_t**2) * x
    std = np.sqrt(max(var_ts * s_s**2 / s_t**2, 0.0))
    z = rng.standard_normal(x.shape)
    return mean + _noise_scale(policy) * std * z


def ddim_step(x, t, t_next, field_, policy, schedule: Schedule):
    """Deterministic DDIM (eta = 0) step."""
    _require_vp(schedule, "DDIM")
    _require_deterministic_policy(policy, "DDIM")
    eps, x0 = _eps_and_x0(x, t, field_, policy, schedule)
    a_s, s_s = schedule.alpha_sigma(t_next)
    return a_s * x0 + s_s * eps


def euler_ode_step(x, t, dt, field_, policy, schedule: Schedule):
    """x + v dt with v the (rescaled) probability-flow velocity."""
    _require_deterministic_policy(policy, "the Euler ODE")
    s = _model_score(field_, policy, x, schedule, t)
    v = rs.score_to_velocity(s, x, schedule, t)
    v = rs.rescale_velocity(_score_policy(policy), v, x, schedule, t)
    return x + v * dt


def check_compatible(config: SamplerConfig, policy, field_=None) -> None:
    """Raise ConfigurationError naming the violated constraint."""
    kind, sched = config.kind, config.schedule
    if kind in (DDPM, DDIM, EULER_SDE) and sched.kind != VP:
        raise ConfigurationError(f"sampler {kind} requires the vp schedule (got {sched.kind})")
    if isinstance(policy, rs.CNS) and kind not in STOCHASTIC:
        raise ConfigurationError(f"CNS only applies to stochastic samplers (ddpm, euler_sde), not {kind}")
    if sched.kind == FLOW and kind != EULER_ODE:
        raise ConfigurationError("flow schedule is only sampled with euler_ode")
    if isinstance(policy, rs.CFG):
        labels = getattr(field_, "labels", None)
        if not labels:
            raise ConfigurationError("CFG needs a labelled mixture field")
        if policy.cls not in labels:
            raise ConfigurationError(f"CFG class {policy.cls} is not a label of the mixture")
    dim = getattr(field_, "dim", config.dim)
    if dim != config.dim:
        raise ConfigurationError(f"field dimension {dim} does not match config dim {config.dim}")


def _integrate_block(config: SamplerConfig, field_, policy, b: int, n: int) -> np.ndarray:
    rng = block_rng(config.seed, b)
    sched = config.schedule
    x = config.prior_scale * rng.standard_normal((n, config.dim))
    ts = sched.time_grid(config.steps, config.grid, config.grid_scale)
    for t, t_next in zip(ts[:-1], ts[1:]):
        if config.kind == DDPM:
            x = ddpm_step(x, t, t_next, field_, policy, sched, rng)
        elif config.kind == DDIM:
            x = ddim_step(x, t, t_next, field_, policy, sched)
        elif config.kind == EULER_ODE:
            x = euler_ode_step(x, t, t_next - t, field_, policy, sched)
        else:
            x = euler_sde_step(x, t, t_next - t, field_, policy, sched, rng)
    return x


def describe_field(field_) -> dict:
    if hasattr(field_, "to_dict"):
        return {"mixture": field_.to_dict()}
    if getattr(field_, "source", None):
        return {"dataset": dict(field_.source)}
    return {}


def run(config: SamplerConfig, field_, policy=None, workers: int = 1) -> SampleBatch:
    """Integrate the whole batch; identical output for any ``workers``."""
    policy = rs.NoRescale() if policy is None else policy
    check_compatible(config, policy, field_)
    jobs = list(_blocks(config))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda bn: _integrate_block(config, field_, policy, *bn), jobs))
    else:
        parts = [_integrate_block(config, field_, policy, b, n) for b, n in jobs]
    points = np.concatenate(parts, axis=0)
    if not np.all(np.isfinite(points)):
        raise FloatingPointError("sampler produced non-finite points")
    meta = config.to_dict()
    meta["policy"] = policy.to_dict()
    meta["field"] = describe_field(field_)
    return SampleBatch(points, meta)


def with_overrides(config: SamplerConfig, **kw) -> SamplerConfig:
    return replace(config, **kw)
