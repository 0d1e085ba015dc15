"""Forward-process coefficients for VP (linear beta) and flow-matching interpolants.

Every schedule defines x_t = alpha_t * x_0 + sigma_t * eps with t = 0 clean data
and t = 1 pure noise. Evaluation is restricted to [t_clip, 1 - t_clip] because
the score/velocity conversions divide by alpha_t and sigma_t.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, ParameterError, UnsupportedScheduleError

VP = "vp"
FLOW = "flow"


@dataclass(frozen=True)
class Schedule:
    kind: str = VP
    beta_min: float = 0.1
    beta_max: float = 20.0
    t_clip: float = 1e-3

    def __post_init__(self):
        if self.kind not in (VP, FLOW):
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 < self.t_clip < 0.5:
            raise ParameterError(f"t_clip must lie in (0, 0.5), got {self.t_clip}")
        if self.kind == VP and not 0.0 < self.beta_min <= self.beta_max:
            raise ParameterError("VP schedule needs 0 < beta_min <= beta_max")

    @classmethod
    def vp(cls, beta_min: float = 0.1, beta_max: float = 20.0, t_clip: float = 1e-3) -> "Schedule":
        return cls(VP, beta_min, beta_max, t_clip)

    @classmethod
    def flow(cls, t_clip: float = 1e-3) -> "Schedule":
        return cls(FLOW, t_clip=t_clip)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def t_max(self) -> float:
        return 1.0 - self.t_clip

    def time_grid(self, steps: int, spacing: str = "uniform", scale: float = 0.5) -> np.ndarray:
        """Decreasing grid of ``steps + 1`` times from 1 - t_clip to t_clip.

        ``spacing="uniform"`` is uniform in t. ``spacing="angle"`` is uniform in
        atan(sigma_t / (scale * alpha_t)), the rotation angle between signal and
        noise for data of standard deviation ``scale``; it concentrates steps
        where a deterministic sampler resolves per-mode variance.
        """
        if steps < 1:
            raise ParameterError("steps must be positive")
        if spacing == "uniform":
            return np.linspace(self.t_max, self.t_clip, steps + 1)
        if spacing != "angle":
            raise ParameterError(f"unknown grid spacing {spacing!r}")
        if not scale > 0:
            raise ParameterError("grid scale must be positive")
        a0, s0 = self.alpha_sigma(self.t_max)
        a1, s1 = self.alpha_sigma(self.t_clip)
        theta = np.linspace(np.arctan2(s0, scale * a0), np.arctan2(s1, scale * a1), steps + 1)
        ts = self.t_from_noise_ratio(scale * np.tan(theta))
        ts[0], ts[-1] = self.t_max, self.t_clip
        return ts

    def t_from_noise_ratio(self, rho):
        """Invert rho = sigma_t / alpha_t for t."""
        rho = np.asarray(rho, dtype=float)
        if self.kind == FLOW:
            return rho / (1.0 + rho)
        # integral of beta = log(1 + rho^2); solve the quadratic in t
        target = np.log1p(rho**2)
        a = 0.5 * (self.beta_max - self.beta_min)
        if a == 0:
            return target / self.beta_min
        b = self.beta_min
        return 2.0 * target / (b + np.sqrt(b * b + 4.0 * a * target))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        # absorbs round-off at the linspace grid endpoints
        lo, hi = self.t_clip - 1e-15, self.t_max + 1e-15
        if np.any(~np.isfinite(t)) or np.any(t < lo) or np.any(t > hi):
            raise DomainError(f"t must lie in [{self.t_clip}, {self.t_max}], got {t}")
        return t[()]

    # VP helpers; valid on all of [0, 1]
    def beta(self, t):
        return self.beta_min + (self.beta_max - self.beta_min) * np.asarray(t, dtype=float)

    def _int_beta(self, t):
        t = np.asarray(t, dtype=float)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t**2

    def alpha_sigma(self, t):
        """Return (alpha_t, sigma_t)."""
        t = self._check(t)
        if self.kind == FLOW:
            return 1.0 - t, t
        ib = self._int_beta(t)
        alpha = np.exp(-0.5 * ib)
        sigma = np.sqrt(-np.expm1(-ib))
        return alpha, sigma

    def snr(self, t):
        """Signal-to-noise ratio eta_t = alpha_t^2 / sigma_t^2."""
        alpha, sigma = self.alpha_sigma(t)
        return (alpha / sigma) ** 2

    def alpha_sigma_dot(self, t):
        """Analytic time derivatives (d alpha_t/dt, d sigma_t/dt)."""
        t = self._check(t)
        if self.kind == FLOW:
            return -np.ones_like(t), np.ones_like(t)
        alpha, sigma = self.alpha_sigma(t)
        b = self.beta(t)
        # sigma^2 = 1 - alpha^2  =>  sigma' = -alpha alpha' / sigma
        return -0.5 * b * alpha, 0.5 * b * alpha**2 / sigma

    def drift_diffusion(self, t):
        """VP SDE coefficients f(t) = -beta(t)/2 and g(t) = sqrt(beta(t)).

        Defined on the whole unit interval since neither coefficient is singular.
        """
        if self.kind != VP:
            raise UnsupportedScheduleError("drift/diffusion coefficients exist only for the VP schedule")
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise DomainError(f"t must lie in [0, 1], got {t}")
        b = self.beta(t)
        return -0.5 * b, np.sqrt(b)


def from_config(cfg: dict) -> Schedule:
    """Build a schedule from the ``schedule``/``beta_min``/``beta_max``/``t_clip`` keys."""
    kind = cfg.get("schedule", VP)
    if kind == FLOW:
        return Schedule.flow(t_clip=float(cfg.get("t_clip", 1e-3)))
    return Schedule(
        kind,
        beta_min=float(cfg.get("beta_min", 0.1)),
        beta_max=float(cfg.get("beta_max", 20.0)),
        t_clip=float(cfg.get("t_clip", 1e-3)),
    )
