"""Minimal static SVG plots: histogram panels, scatter panels, line charts.

Each function takes plain arrays (as read back from the experiment CSVs) and
returns SVG text, so figures can be regenerated from the data files alone.
"""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
_PANEL = 220
_PAD = 28


def _f(v: float) -> str:
    return f"{v:.2f}"


def _svg(width: int, height: int, body: list) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def histogram_panels(panels: Sequence[Tuple[str, np.ndarray]], lo: float, hi: float, bins: int = 120) -> str:
    """One density histogram per panel, laid out in a row, shared x range."""
    edges = np.linspace(lo, hi, bins + 1)
    hists = [np.histogram(np.asarray(v, dtype=float).ravel(), bins=edges, density=True)[0] for _, v in panels]
    ymax = max((h.max() for h in hists if h.size), default=1.0) or 1.0
    w = len(panels) * (_PANEL + _PAD) + _PAD
    h = _PANEL + 2 * _PAD
    body = []
    for p, ((title, _), hist) in enumerate(zip(panels, hists)):
        x0 = _PAD + p * (_PANEL + _PAD)
        y0 = _PAD
        body.append(f'<rect x="{x0}" y="{y0}" width="{_PANEL}" height="{_PANEL}" fill="none" stroke="#999"/>')
        body.append(f'<text x="{x0 + _PANEL / 2}" y="{y0 - 8}" text-anchor="middle">{_esc(title)}</text>')
        bw = _PANEL / bins
        color = _COLORS[p % len(_COLORS)]
        for i, val in enumerate(hist):
            if val <= 0:
                continue
            bh = _PANEL * val / ymax
            body.append(f'<rect x="{_f(x0 + i * bw)}" y="{_f(y0 + _PANEL - bh)}" '
                        f'width="{_f(bw)}" height="{_f(bh)}" fill="{color}"/>')
        body.append(f'<text x="{x0}" y="{y0 + _PANEL + 14}">{lo:g}</text>')
        body.append(f'<text x="{x0 + _PANEL}" y="{y0 + _PANEL + 14}" text-anchor="end">{hi:g}</text>')
    return _svg(w, h, body)


def scatter_panels(panels: Sequence[Tuple[str, np.ndarray]], lo: float, hi: float, max_points: int = 4000) -> str:
    """2D scatter per panel on the square [lo, hi]^2; points outside are clipped away."""
    w = len(panels) * (_PANEL + _PAD) + _PAD
    h = _PANEL + 2 * _PAD
    body = []
    scale = _PANEL / (hi - lo)
    for p, (title, pts) in enumerate(panels):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)[:max_points]
        x0 = _PAD + p * (_PANEL + _PAD)
        y0 = _PAD
        body.append(f'<rect x="{x0}" y="{y0}" width="{_PANEL}" height="{_PANEL}" fill="none" stroke="#999"/>')
        body.append(f'<text x="{x0 + _PANEL / 2}" y="{y0 - 8}" text-anchor="middle">{_esc(title)}</text>')
        keep = np.all((pts >= lo) & (pts <= hi), axis=1)
        for px, py in pts[keep]:
            body.append(f'<circle cx="{_f(x0 + (px - lo) * scale)}" cy="{_f(y0 + (hi - py) * scale)}" '
                        f'r="0.8" fill="{_COLORS[p % len(_COLORS)]}"/>')
    return _svg(w, h, body)


def line_chart(series: Sequence[Tuple[str, np.ndarray, np.ndarray]], xlabel: str, ylabel: str,
               logy: bool = False) -> str:
    """Overlaid curves with a legend; ``logy`` plots log10 of positive values."""
    width, height, left, bottom = 520, 340, 60, 40
    pw, ph = width - left - 140, height - bottom - 20
    xs = np.concatenate([np.asarray(x, dtype=float) for _, x, _ in series])
    ys = [np.asarray(y, dtype=float) for _, _, y in series]
    if logy:
        ys = [np.log10(np.where(y > 0, y, np.nan)) for y in ys]
    allv = np.concatenate(ys)
    allv = allv[np.isfinite(allv)]
    xmin, xmax = float(xs.min()), float(xs.max())
    ymin, ymax = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if ymax == ymin:
        ymin, ymax = ymin - 0.5, ymax + 0.5
    if xmax == xmin:
        xmax = xmin + 1.0

    def px(v):
        return left + (v - xmin) / (xmax - xmin) * pw

    def py(v):
        return 20 + (ymax - v) / (ymax - ymin) * ph

    body = [f'<rect x="{left}" y="20" width="{pw}" height="{ph}" fill="none" stroke="#999"/>',
            f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>',
            f'<text x="14" y="{20 + ph / 2}" transform="rotate(-90 14 {20 + ph / 2})" text-anchor="middle">'
            f'{_esc(ylabel + (" (log10)" if logy else ""))}</text>',
            f'<text x="{left}" y="{20 + ph + 14}">{xmin:g}</text>',
            f'<text x="{left + pw}" y="{20 + ph + 14}" text-anchor="end">{xmax:g}</text>',
            f'<text x="{left - 4}" y="{20 + ph}" text-anchor="end">{ymin:.3g}</text>',
            f'<text x="{left - 4}" y="28" text-anchor="end">{ymax:.3g}</text>']
    for i, ((label, x, _), y) in enumerate(zip(series, ys)):
        color = _COLORS[i % len(_COLORS)]
        x = np.asarray(x, dtype=float)
        ok = np.isfinite(y)
        pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(x[ok], y[ok]))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = 30 + 16 * i
        body.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{_esc(label)}</text>')
    return _svg(width, height, body)
