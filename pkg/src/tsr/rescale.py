"""Temporal score rescaling and the baseline steering policies.

TSR multiplies the model score by

    r_t(k, sigma) = (eta_t sigma^2 + 1) / (eta_t sigma^2 / k + 1)

where eta_t is the schedule SNR. Because score, epsilon and velocity
predictions are linear in each other at fixed (x, t), the same factor can be
applied in whichever parameterization the model emits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ParameterError, PolicyMisuseError, UnsupportedScheduleError
from .schedule import Schedule


@dataclass(frozen=True)
class NoRescale:
    name = "none"

    def to_dict(self) -> dict:
        return {"policy": self.name}


@dataclass(frozen=True)
class TSR:
    k: float
    sigma: float = 1.0
    name = "tsr"

    def __post_init__(self):
        _positive("k", self.k)
        _positive("sigma", self.sigma)

    def to_dict(self) -> dict:
        return {"policy": self.name, "k": self.k, "sigma": self.sigma}


@dataclass(frozen=True)
class CNS:
    """Constant noise scaling: stochastic samplers shrink their noise by 1/sqrt(k)."""

    k: float
    name = "cns"

    def __post_init__(self):
        _positive("k", self.k)

    def to_dict(self) -> dict:
        return {"policy": self.name, "k": self.k}


@dataclass(frozen=True)
class CFG:
    """Classifier-free guidance toward class ``cls`` with weight ``w``."""

    w: float
    cls: int = 1
    name = "cfg"

    def to_dict(self) -> dict:
        return {"policy": self.name, "w": self.w, "class": self.cls}


Policy = Union[NoRescale, TSR, CNS, CFG]


def _positive(label: str, v: float) -> None:
    if not (np.isfinite(v) and v > 0):
        raise ParameterError(f"{label} must be positive, got {v}")


def policy_from_dict(d: Optional[dict]) -> Policy:
    """Inverse of ``to_dict``; also accepts the CLI-style flat keys."""
    if not d:
        return NoRescale()
    kind = str(d.get("policy", "none")).lower()
    if kind == "none":
        return NoRescale()
    if kind == "tsr":
        return TSR(float(d.get("k", 1.0)), float(d.get("sigma", 1.0)))
    if kind == "cns":
        return CNS(float(d.get("k", 1.0)))
    if kind == "cfg":
        return CFG(float(d.get("w", 1.0)), int(d.get("class", d.get("cls", 1))))
    raise ParameterError(f"unknown policy {kind!r}")


def tsr_factor(k: float, sigma: float, eta):
    """Rescaling factor r for SNR ``eta``.

    Evaluated as k (eta sigma^2 + 1) / (eta sigma^2 + k), which stays finite
    as eta grows without bound.
    """
    _positive("k", k)
    _positive("sigma", sigma)
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise ParameterError("eta must be nonnegative")
    a = eta * sigma**2
    with np.errstate(invalid="ignore"):
        r = k * (a + 1.0) / (a + k)
    return np.where(np.isinf(a), float(k), r)[()]


def policy_factor(policy: Policy, schedule: Schedule, t) -> float:
    """r_t for TSR, 1 for no rescaling; other policies do not rescale scores."""
    if isinstance(policy, NoRescale) or policy is None:
        return 1.0
    if isinstance(policy, TSR):
        if policy.k == 1.0:
            return 1.0
        return tsr_factor(policy.k, policy.sigma, schedule.snr(t))
    raise PolicyMisuseError(f"policy {policy.name!r} does not rescale model predictions")


def rescale_score(policy: Policy, score, schedule: Schedule, t):
    return policy_factor(policy, schedule, t) * np.asarray(score, dtype=float)


def rescale_epsilon(policy: Policy, eps, schedule: Schedule, t):
    """Noise-prediction form; identical factor since score = -eps / sigma_t."""
    return policy_factor(policy, schedule, t) * np.asarray(eps, dtype=float)


def _velocity_denominator(schedule: Schedule, t):
    alpha, sigma = schedule.alpha_sigma(t)
    adot, sdot = schedule.alpha_sigma_dot(t)
    den = sigma * (adot * sigma - alpha * sdot)
    if np.any(den == 0):
        raise UnsupportedScheduleError("degenerate velocity/score conversion at this time")
    return alpha, adot, den


def velocity_to_score(v, x, schedule: Schedule, t):
    """score = (alpha_t v - alpha_dot_t x) / (sigma_t (alpha_dot_t sigma_t - alpha_t sigma_dot_t))."""
    alpha, adot, den = _velocity_denominator(schedule, t)
    return (alpha * np.asarray(v, dtype=float) - adot * np.asarray(x, dtype=float)) / den


def score_to_velocity(score, x, schedule: Schedule, t):
    alpha, adot, den = _velocity_denominator(schedule, t)
    return (den * np.asarray(score, dtype=float) + adot * np.asarray(x, dtype=float)) / alpha


def rescale_velocity(policy: Policy, v, x, schedule: Schedule, t):
    """Velocity whose implied score is r_t times the score implied by ``v``."""
    r = policy_factor(policy, schedule, t)
    v = np.asarray(v, dtype=float)
    if np.ndim(r) == 0 and r == 1.0:
        return v
    alpha, _ = schedule.alpha_sigma(t)
    adot, _ = schedule.alpha_sigma_dot(t)
    ax = adot * np.asarray(x, dtype=float)
    return (r * (alpha * v - ax) + ax) / alpha


def cns_noise_scale(k: float) -> float:
    _positive("k", k)
    return 1.0 / np.sqrt(k)


def cfg_combine(score_cond, score_uncond, w: float):
    """s_uncond + w (s_cond - s_uncond), evaluated so w in {0, 1} is exact."""
    sc = np.asarray(score_cond, dtype=float)
    su = np.asarray(score_uncond, dtype=float)
    if sc.shape != su.shape:
        raise ParameterError(f"shape mismatch {sc.shape} vs {su.shape}")
    return (1.0 - w) * su + w * sc
