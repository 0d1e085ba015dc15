"""Sample-quality measurements: mode weights/spread, 1D W1, 2D cell coverage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError
from .scorefield import CHECKER_CELLS, GaussianMixture


def _points(batch) -> np.ndarray:
    pts = getattr(batch, "points", batch)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    return pts


@dataclass
class ModeStats:
    """Per-mode fraction, mean and isotropic std, plus the unassigned fraction.

    Modes that receive no points report a NaN mean and zero std.
    """

    fractions: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    unassigned: float
    counts: np.ndarray

    @property
    def spread(self) -> float:
        """Max minus min mode fraction."""
        return float(self.fractions.max() - self.fractions.min())


def assign_modes(batch, mix: GaussianMixture, cutoff_multiplier: float = 5.0, k: Optional[float] = None) -> ModeStats:
    """Nearest-mean assignment; ties go to the lower-index mean.

    Points farther than ``cutoff_multiplier * sigma / sqrt(k)`` from every mean
    are left unassigned. ``k`` defaults to the policy k recorded in the batch
    metadata, or 1.
    """
    pts = _points(batch)
    if len(pts) == 0:
        raise ParameterError("empty batch")
    if not cutoff_multiplier > 0:
        raise ParameterError("cutoff_multiplier must be positive")
    if k is None:
        k = float(getattr(batch, "meta", {}).get("policy", {}).get("k", 1.0))
    if pts.shape[1] != mix.dim:
        raise ParameterError(f"batch dimension {pts.shape[1]} does not match mixture dimension {mix.dim}")
    dist = np.sqrt(((pts[:, None, :] - mix.means[None, :, :]) ** 2).sum(-1))
    nearest = np.argmin(dist, axis=1)
    far = dist[np.arange(len(pts)), nearest] > cutoff_multiplier * mix.sigma / np.sqrt(k)
    n_modes = mix.n_components
    counts = np.bincount(nearest[~far], minlength=n_modes)
    means = np.full((n_modes, mix.dim), np.nan)
    stds = np.zeros(n_modes)
    for m in range(n_modes):
        sel = pts[(nearest == m) & ~far]
        if len(sel):
            means[m] = sel.mean(axis=0)
            stds[m] = np.sqrt(((sel - means[m]) ** 2).sum(axis=1).mean() / mix.dim)
    total = len(pts)
    return ModeStats(counts / total, means, stds, float(far.sum()) / total, counts)


def wasserstein1(a, b) -> float:
    """Exact empirical W1 between 1D samples via sorted differences.

    When sizes differ, the larger sample is reduced to evenly spaced order
    statistics so both sides have the same length.
    """
    a = np.sort(np.asarray(a, dtype=float).reshape(-1))
    b = np.sort(np.asarray(b, dtype=float).reshape(-1))
    if len(a) == 0 or len(b) == 0:
        raise ParameterError("wasserstein1 needs nonempty samples")
    n = min(len(a), len(b))
    if len(a) > n:
        a = a[np.round(np.linspace(0, len(a) - 1, n)).astype(int)]
    if len(b) > n:
        b = b[np.round(np.linspace(0, len(b) - 1, n)).astype(int)]
    return float(np.mean(np.abs(a - b)))


@dataclass
class Coverage:
    cells: tuple
    fractions: np.ndarray
    out_of_support: float


def grid_coverage(batch, cells: Sequence = CHECKER_CELLS, lo: float = -2.0, hi: float = 2.0, n: int = 4) -> Coverage:
    """Fraction of points in each listed cell of an n x n grid over [lo, hi]^2.

    Everything outside the listed cells, including points outside the square,
    counts as out of support.
    """
    pts = _points(batch)
    if pts.shape[1] != 2:
        raise ParameterError(f"grid coverage needs 2D points, got dimension {pts.shape[1]}")
    if len(pts) == 0:
        raise ParameterError("empty batch")
    width = (hi - lo) / n
    ij = np.floor((pts - lo) / width).astype(int)
    # the closed upper edge belongs to the last cell
    ij[pts == hi] = n - 1
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    cells = tuple(tuple(c) for c in cells)
    counts = np.array([np.sum(inside & (ij[:, 0] == i) & (ij[:, 1] == j)) for i, j in cells])
    total = len(pts)
    return Coverage(cells, counts / total, float(total - counts.sum()) / total)
