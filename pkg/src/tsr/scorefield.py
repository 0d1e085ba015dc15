"""Closed-form score providers.

Everything here is an isotropic Gaussian mixture under the forward process:
a data mixture with components N(mu_m, sigma^2 I) becomes, at time t, a mixture
with means alpha_t mu_m and variance alpha_t^2 sigma^2 / k + sigma_t^2, and a
finite dataset becomes a mixture of N(alpha_t x_i, sigma_t^2 I). Both share one
log-space responsibility kernel.

A score provider is any object with ``score(x, schedule, t) -> (B, d) array``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError
from .schedule import Schedule

# rows x centers per chunk in the responsibility kernel
_CHUNK_ELEMS = 4_000_000
# above this many centers the kernel switches to the matmul expansion
_DIRECT_MAX = 64


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, dim) if dim == 1 else x.reshape(1, -1)
    if x.shape[-1] != dim:
        raise ParameterError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _log_responsibilities(x: np.ndarray, centers: np.ndarray, log_w: np.ndarray, var: float) -> np.ndarray:
    """Normalized log posterior over components for isotropic kernels of variance ``var``."""
    sq = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    logits = log_w[None, :] - 0.5 * sq / var
    m = logits.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
    return logits - lse


def _kernel_score(x: np.ndarray, centers: np.ndarray, log_w: np.ndarray, var: float) -> np.ndarray:
    """Score of sum_n exp(log_w_n) N(centers_n, var I) at each row of ``x``."""
    if len(centers) <= _DIRECT_MAX:
        resp = np.exp(_log_responsibilities(x, centers, log_w, var))
        return (resp @ centers - x) / var
    # large center sets: expand |x - c|^2 and drop the per-row |x|^2 term so the
    # pairwise work is a single matmul
    bias = log_w - 0.5 * (centers**2).sum(axis=1) / var
    out = np.empty_like(x)
    rows = max(1, _CHUNK_ELEMS // len(centers))
    for lo in range(0, len(x), rows):
        xb = x[lo : lo + rows]
        logits = (xb @ centers.T) / var + bias
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        out[lo : lo + rows] = (logits @ centers) / logits.sum(axis=1, keepdims=True) - xb
    return out / var


def isotropic_mixture_score(x, centers, weights, var: float) -> np.ndarray:
    """Score of sum_n weights_n N(centers_n, var I); the shared kernel behind every field."""
    centers = np.asarray(centers, dtype=float)
    x = _as_points(x, centers.shape[1])
    return _kernel_score(x, centers, np.log(np.asarray(weights, dtype=float)), float(var))


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Isotropic mixture sum_m w_m N(mu_m, sigma^2 I) with optional class labels."""

    weights: np.ndarray
    means: np.ndarray
    sigma: float
    labels: Optional[tuple] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(-1, 1)
        if len(w) == 0 or mu.shape[0] != len(w):
            raise ParameterError("need one mean per weight and at least one component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be positive and sum to 1")
        if not np.all(np.isfinite(mu)):
            raise ParameterError("means must be finite")
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if self.labels is not None and len(self.labels) != len(w):
            raise ParameterError("need one label per component")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(int(c) for c in self.labels))

    @classmethod
    def uniform(cls, means, sigma: float, labels=None) -> "GaussianMixture":
        n = len(means)
        return cls(np.full(n, 1.0 / n), means, sigma, labels)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def scaled(self, k: float) -> "GaussianMixture":
        """Same means and weights, component std sigma / sqrt(k)."""
        _check_k(k)
        return GaussianMixture(self.weights, self.means, self.sigma / np.sqrt(k), self.labels)

    def conditional(self, cls: int) -> "GaussianMixture":
        """Sub-mixture of the components labelled ``cls``, weights renormalized."""
        if self.labels is None:
            raise ParameterError("mixture has no class labels")
        idx = [i for i, c in enumerate(self.labels) if c == cls]
        if not idx:
            raise ParameterError(f"no component carries label {cls}")
        w = self.weights[idx]
        return GaussianMixture(w / w.sum(), self.means[idx], self.sigma, tuple(self.labels[i] for i in idx))

    def score(self, x, schedule: Schedule, t: float, k: float = 1.0) -> np.ndarray:
        return mixture_score(self, x, schedule, t, k)

    def to_dict(self) -> dict:
        d = {"weights": self.weights.tolist(), "means": self.means.tolist(), "sigma": self.sigma}
        if self.labels is not None:
            d["labels"] = list(self.labels)
        return d


def _check_k(k: float) -> None:
    if not (np.isfinite(k) and k > 0):
        raise ParameterError(f"k must be positive, got {k}")


def mixture_from_config(cfg: dict) -> GaussianMixture:
    """Parse a ``[mixture]`` block: weights, means, sigma, optional labels."""
    try:
        means = cfg["means"]
        sigma = cfg["sigma"]
    except KeyError as e:
        raise ParameterError(f"mixture block is missing {e}") from None
    weights = cfg.get("weights")
    if weights is None:
        weights = [1.0 / len(means)] * len(means)
    return GaussianMixture(weights, means, sigma, cfg.get("labels"))


@dataclass(frozen=True)
class MixtureGeometry:
    delta: float
    delta_max: float

    @classmethod
    def of(cls, mix: GaussianMixture) -> "MixtureGeometry":
        """Min/max pairwise mean distance; both 0 for a single component."""
        mu = mix.means
        if len(mu) == 1:
            return cls(0.0, 0.0)
        d = np.sqrt(((mu[:, None, :] - mu[None, :, :]) ** 2).sum(-1))
        off = d[~np.eye(len(mu), dtype=bool)]
        return cls(float(off.min()), float(off.max()))


def mixture_noisy_params(mix: GaussianMixture, schedule: Schedule, t: float, k: float = 1.0):
    """Means alpha_t mu_m and shared variance alpha_t^2 sigma^2 / k + sigma_t^2 at time t."""
    _check_k(k)
    alpha, sigma_t = schedule.alpha_sigma(t)
    return alpha * mix.means, float(alpha**2 * mix.sigma**2 / k + sigma_t**2)


def responsibilities(mix: GaussianMixture, x, schedule: Schedule, t: float, k: float = 1.0) -> np.ndarray:
    """Posterior component probabilities, shape (B, N)."""
    x = _as_points(x, mix.dim)
    centers, var = mixture_noisy_params(mix, schedule, t, k)
    return np.exp(_log_responsibilities(x, centers, np.log(mix.weights), var))


def mixture_score(mix: GaussianMixture, x, schedule: Schedule, t: float, k: float = 1.0) -> np.ndarray:
    """Exact score of the (k-scaled) noisy mixture at time t, shape (B, d).

    With k = 1 this is the score of the plain forward marginal; other k give
    the ground-truth score of the locally temperature-scaled target.
    """
    x = _as_points(x, mix.dim)
    centers, var = mixture_noisy_params(mix, schedule, t, k)
    return _kernel_score(x, centers, np.log(mix.weights), var)


def mixture_log_density(mix: GaussianMixture, x, schedule: Schedule, t: float, k: float = 1.0) -> np.ndarray:
    x = _as_points(x, mix.dim)
    centers, var = mixture_noisy_params(mix, schedule, t, k)
    sq = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    logits = np.log(mix.weights)[None, :] - 0.5 * sq / var - 0.5 * mix.dim * np.log(2 * np.pi * var)
    m = logits.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))[:, 0]


def sample_mixture(mix: GaussianMixture, k: float, n: int, seed, return_components: bool = False):
    """Exact draws from the data mixture with component std sigma / sqrt(k)."""
    _check_k(k)
    if n < 1:
        raise ParameterError("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    comp = rng.choice(mix.n_components, size=n, p=mix.weights)
    x = mix.means[comp] + (mix.sigma / np.sqrt(k)) * rng.standard_normal((n, mix.dim))
    return (x, comp) if return_components else x


@dataclass(frozen=True, eq=False)
class EmpiricalField:
    """Exact score of a finite dataset pushed through the forward process.

    ``source`` records the (kind, n, seed) triple the dataset was generated from.
    """

    points: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if len(pts) < 1 or not np.all(np.isfinite(pts)):
            raise ParameterError("dataset must be nonempty and finite")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def score(self, x, schedule: Schedule, t: float) -> np.ndarray:
        return empirical_score(self, x, schedule, t)


def empirical_score(f: EmpiricalField, x, schedule: Schedule, t: float) -> np.ndarray:
    x = _as_points(x, f.dim)
    alpha, sigma_t = schedule.alpha_sigma(t)
    log_w = np.full(f.count, -np.log(f.count))
    return _kernel_score(x, alpha * f.points, log_w, float(sigma_t**2))


# 4x4 grid on [-2, 2]^2; cell (i, j) is column i, row j from the lower-left corner
CHECKER_CELLS: tuple = tuple((i, j) for j in range(4) for i in range(4) if (i + j) % 2 == 0)
CHECKER_CORNERS: tuple = ((0, 0), (3, 3))


def make_checkerboard(n: int, seed) -> EmpiricalField:
    """Uniform points over the 8 occupied cells of a 4x4 checkerboard on [-2, 2]^2."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    rng = np.random.default_rng(seed)
    cells = np.asarray(CHECKER_CELLS, dtype=float)
    pick = cells[rng.integers(len(cells), size=n)]
    pts = pick - 2.0 + rng.random((n, 2))
    return EmpiricalField(pts, {"kind": "checkerboard", "n": n, "seed": seed})


def make_swissroll(n: int, seed, jitter: float = 0.03) -> EmpiricalField:
    """2D spiral (theta cos theta, theta sin theta) / (3 pi), theta ~ U[1.5 pi, 4.5 pi]."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(1.5 * np.pi, 4.5 * np.pi, size=n)
    pts = np.stack([theta * np.cos(theta), theta * np.sin(theta)], axis=1) / (3 * np.pi)
    pts += jitter * rng.standard_normal((n, 2))
    return EmpiricalField(pts, {"kind": "swissroll", "n": n, "seed": seed, "jitter": jitter})


def make_dataset(kind: str, n: int, seed) -> EmpiricalField:
    if kind == "checkerboard":
        return make_checkerboard(n, seed)
    if kind == "swissroll":
        return make_swissroll(n, seed)
    raise ParameterError(f"unknown dataset kind {kind!r}")


def two_class_mixture_1d(means: Sequence[float], sigma: float) -> GaussianMixture:
    """Equal-weight 1D mixture; left half of the means is class 0, right half class 1."""
    half = len(means) // 2
    labels = [0] * half + [1] * (len(means) - half)
    return GaussianMixture.uniform(np.asarray(means, dtype=float).reshape(-1, 1), sigma, labels)
