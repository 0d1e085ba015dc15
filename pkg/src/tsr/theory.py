"""Numerical checks of the TSR approximation-error bounds and of the CNS score gap.

The error of TSR on a mixture of isotropic Gaussians is

    Error(t) = E_{x ~ p_t^k} || sum_n (w1_n(x) - wk_n(x)) (x - alpha_t mu_n) || / sigma_{t,k}^2

where w1 / wk are component responsibilities under per-component variance
sigma_{t,1}^2 / sigma_{t,k}^2, with sigma_{t,k}^2 = alpha_t^2 sigma^2 / k + sigma_t^2.
It is estimated by Monte Carlo and compared against two closed-form bounds.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, List

import numpy as np

from .errors import ParameterError, UnsupportedRegimeError, UnsupportedScheduleError
from .schedule import VP, Schedule
from .scorefield import (
    GaussianMixture,
    MixtureGeometry,
    isotropic_mixture_score,
    mixture_noisy_params,
    responsibilities,
)

SLACK = 0.05
Z_HEADROOM = 3.0


def noisy_variances(mix: GaussianMixture, schedule: Schedule, t: float, k: float):
    """(alpha_t, sigma_{t,1}^2, sigma_{t,k}^2)."""
    alpha, _ = schedule.alpha_sigma(t)
    _, var1 = mixture_noisy_params(mix, schedule, t, 1.0)
    _, vark = mixture_noisy_params(mix, schedule, t, k)
    return float(alpha), var1, vark


def error_mc(mix: GaussianMixture, schedule: Schedule, t: float, k: float, n: int = 20000, seed=0):
    """Monte-Carlo estimate of Error(t) and its standard error."""
    if n < 1000:
        raise ParameterError("error_mc needs at least 1000 samples")
    alpha, _, vark = noisy_variances(mix, schedule, t, k)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    comp = rng.choice(mix.n_components, size=n, p=mix.weights)
    x = alpha * mix.means[comp] + np.sqrt(vark) * rng.standard_normal((n, mix.dim))
    w1 = responsibilities(mix, x, schedule, t, 1.0)
    wk = responsibilities(mix, x, schedule, t, k)
    offsets = x[:, None, :] - alpha * mix.means[None, :, :]
    vals = np.linalg.norm(((w1 - wk)[:, :, None] * offsets).sum(axis=1), axis=1) / vark
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))


def _check_sharpening(k: float) -> None:
    if k < 1:
        raise UnsupportedRegimeError("the error bounds are only stated for k >= 1")


def bound_exp(geom: MixtureGeometry, mix: GaussianMixture, schedule: Schedule, t: float, k: float) -> float:
    """6 alpha_t D_max / s_k^2 * exp(-alpha_t^2 D^2 / (8 s_1^2))."""
    _check_sharpening(k)
    alpha, var1, vark = noisy_variances(mix, schedule, t, k)
    return float(6.0 * alpha * geom.delta_max / vark * np.exp(-(alpha**2) * geom.delta**2 / (8.0 * var1)))


def bound_poly(geom: MixtureGeometry, mix: GaussianMixture, schedule: Schedule, t: float, k: float) -> float:
    """alpha_t D_max / (4 s_k^2) * (1/s_k^2 - 1/s_1^2) * N (d s_k^2 + alpha_t^2 D_max^2)."""
    _check_sharpening(k)
    alpha, var1, vark = noisy_variances(mix, schedule, t, k)
    n, d = mix.n_components, mix.dim
    return float(
        alpha * geom.delta_max / (4.0 * vark)
        * (1.0 / vark - 1.0 / var1)
        * n * (d * vark + alpha**2 * geom.delta_max**2)
    )


@dataclass
class BoundReport:
    t: float
    error_mc: float
    mc_stderr: float
    b_exp: float
    b_poly: float

    @property
    def satisfied(self) -> bool:
        return self.error_mc <= min(self.b_exp, self.b_poly) * (1.0 + SLACK) + Z_HEADROOM * self.mc_stderr

    def row(self) -> dict:
        d = asdict(self)
        d["satisfied"] = self.satisfied
        return d


def validate_bounds(mix: GaussianMixture, schedule: Schedule, k: float, t_grid: Iterable[float],
                    n: int = 20000, seed: int = 0) -> List[BoundReport]:
    """One report per grid time; grid point i samples from the stream (seed, i)."""
    _check_sharpening(k)
    geom = MixtureGeometry.of(mix)
    out = []
    for i, t in enumerate(t_grid):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        est, se = error_mc(mix, schedule, t, k, n, rng)
        out.append(BoundReport(float(t), est, se, bound_exp(geom, mix, schedule, t, k),
                               bound_poly(geom, mix, schedule, t, k)))
    return out


def cns_gap(mix: GaussianMixture, schedule: Schedule, t: float, k: float, x) -> np.ndarray:
    """|| grad log q_t(x) - k grad log p_t(x) || per point.

    p_t is the forward marginal of ``mix``. q_t is the marginal of the locally
    scaled mixture (means kept, std sigma / sqrt(k)) under the CNS forward SDE,
    whose noise variance is sigma_t^2 / k: a mixture with means alpha_t mu_m and
    variance (alpha_t^2 sigma^2 + sigma_t^2) / k.
    """
    if schedule.kind != VP:
        raise UnsupportedScheduleError("the CNS forward SDE is defined for the VP schedule")
    if not k > 0:
        raise ParameterError("k must be positive")
    alpha, sigma_t = schedule.alpha_sigma(t)
    centers = alpha * mix.means
    var_p = alpha**2 * mix.sigma**2 + sigma_t**2
    var_q = (alpha**2 * mix.sigma**2 + sigma_t**2) / k
    sq = isotropic_mixture_score(x, centers, mix.weights, var_q)
    sp = isotropic_mixture_score(x, centers, mix.weights, var_p)
    return np.linalg.norm(sq - k * sp, axis=1)
