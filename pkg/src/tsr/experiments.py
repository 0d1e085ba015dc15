"""Experiment runners behind the CLI.

Each runner takes a fully resolved config dict and an output directory, writes
CSV tables plus SVG figures, and returns a list of ``Check`` results. The
config (and nothing else) determines every CSV byte, so a run can be repeated
from its ``manifest.json``.
"""

from __future__ import annotations

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from . import __version__
from . import artifacts as io
from . import plots
from . import rescale as rs
from . import sampler as sp
from . import theory as th
from .errors import ConfigurationError
from .metrics import assign_modes, grid_coverage, wasserstein1
from .schedule import Schedule, from_config as schedule_from_config
from .scorefield import (
    CHECKER_CELLS,
    CHECKER_CORNERS,
    GaussianMixture,
    make_dataset,
    mixture_from_config,
    sample_mixture,
)

EXPERIMENTS = ("toy1d", "toy2d", "bounds", "cns-gap", "sweep")

_SCHEDULE = {"schedule": "vp", "beta_min": 0.1, "beta_max": 20.0, "t_clip": 1e-3}

DEFAULTS: Dict[str, dict] = {
    "toy1d": {
        **_SCHEDULE, "seed": 0, "n": 30000, "sampler": "ddpm", "steps": 1000, "block": 4096,
        "k": 10.0, "tsr_sigma": 0.1, "cfg_w": 10.0, "class": 1, "cutoff": 5.0,
        "mixture": {"means": [[-5.0], [-3.0], [-1.0], [1.0], [3.0], [5.0]], "sigma": 0.1,
                    "labels": [0, 0, 0, 1, 1, 1]},
    },
    "toy2d": {
        **_SCHEDULE, "seed": 0, "n": 4000, "dataset_n": 4000, "dataset_seed": 1,
        "datasets": ["checkerboard", "swissroll"],
        "methods": ["none_ddpm", "cns_ddpm", "tsr_ddpm", "tsr_ddim"],
        "ddpm_steps": 200, "ddim_steps": 50, "block": 4096, "k": 4.0, "tsr_sigma": 0.3,
        "near_radius": 0.1,
    },
    "bounds": {
        **_SCHEDULE, "seed": 0, "k": 4.0, "n": 20000, "t_min": 0.05, "t_max": 0.95, "t_points": 20,
        "mixture": {"means": [[-5.0], [5.0]], "sigma": 0.1},
    },
    # cns-gap and sweep are deterministic; their seed is recorded but unused
    "cns-gap": {
        **_SCHEDULE, "seed": 0, "k": 4.0, "t_values": [0.1, 0.3, 0.5, 0.7, 0.9],
        "x_min": -3.0, "x_max": 3.0, "x_points": 100,
        "two_mode": {"means": [[-2.0], [2.0]], "sigma": 0.5},
        "shifted": {"means": [[2.0]], "sigma": 0.5},
    },
    "sweep": {
        **_SCHEDULE, "seed": 0, "t_points": 1000, "k_values": [0.5, 1.0, 2.0, 5.0, 10.0], "k_sigma": 1.0,
        "sigma_values": [0.25, 0.5, 1.0, 3.0], "sigma_k": 2.0, "onset_r": 1.5,
    },
}

# keys every experiment accepts even when its defaults do not list them
_RUNTIME_KEYS = ("workers",)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def resolve_config(experiment: str, file_cfg: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then config-file values, then CLI overrides. Unknown keys are errors."""
    if experiment not in DEFAULTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    cfg = copy.deepcopy(DEFAULTS[experiment])
    for source in (file_cfg or {}, overrides or {}):
        for key, val in source.items():
            if key in ("experiment",) + _RUNTIME_KEYS:
                continue
            if key not in cfg:
                raise ConfigurationError(f"unknown key {key!r} for experiment {experiment}")
            cfg[key] = val
    cfg["experiment"] = experiment
    return cfg


def manifest(cfg: dict) -> dict:
    return {"experiment": cfg["experiment"], "schema": io.SCHEMA_VERSION, "tsr_version": __version__,
            "config": cfg}


def _schedule(cfg: dict) -> Schedule:
    return schedule_from_config(cfg)


def _map(fn: Callable, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _metric_rows(cfg, policy_name, k, sigma, sampler, metrics: dict):
    return [(cfg["experiment"], policy_name, k, sigma, sampler, cfg["seed"], name, value)
            for name, value in metrics.items()]


_METRIC_HEADER = ("experiment", "policy", "k", "sigma", "sampler", "seed", "metric", "value")


# ---------------------------------------------------------------------------
# toy1d


def run_toy1d(cfg: dict, out: Path, workers: int = 1) -> List[Check]:
    sched = _schedule(cfg)
    mix = mixture_from_config(cfg["mixture"])
    if mix.dim != 1 or mix.labels is None:
        raise ConfigurationError("toy1d needs a labelled 1D mixture")
    cls, k, n, seed = int(cfg["class"]), float(cfg["k"]), int(cfg["n"]), cfg["seed"]
    cond = mix.conditional(cls)
    base = sp.SamplerConfig(cfg["sampler"], sched, int(cfg["steps"]), seed, n, 1, block=int(cfg["block"]))
    ref_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    exact_k = sample_mixture(cond, k, n, ref_rng)
    exact_1 = sample_mixture(cond, 1.0, n, ref_rng)

    methods = [
        ("none", cond, rs.NoRescale(), 1.0, ""),
        ("cfg", mix, rs.CFG(float(cfg["cfg_w"]), cls), 1.0, ""),
        ("cns", cond, rs.CNS(k), k, ""),
        ("tsr", cond, rs.TSR(k, float(cfg["tsr_sigma"])), k, cfg["tsr_sigma"]),
    ]

    def one(m):
        name, field_, pol, _, _ = m
        return sp.run(base, field_, pol).points

    samples = {"reference": exact_k}
    samples.update(zip([m[0] for m in methods], _map(one, methods, workers)))
    for name, pts in samples.items():
        io.write_points_csv(out / f"samples_{name}.csv", pts)

    class_modes = [i for i, c in enumerate(mix.labels) if c == cls]
    mode_rows, metric_rows, stats = [], [], {}
    info = {"reference": ("exact", k, ""), **{m[0]: (cfg["sampler"], m[3], m[4]) for m in methods}}
    for name, pts in samples.items():
        sampler_name, kk, sig = info[name]
        st = assign_modes(pts, mix, float(cfg["cutoff"]), k=kk)
        stats[name] = st
        for m in range(mix.n_components):
            mode_rows.append((name, m, mix.labels[m], mix.means[m, 0], st.fractions[m], st.means[m, 0],
                              st.stds[m], int(st.counts[m])))
        cf = st.fractions[class_modes]
        metric_rows += _metric_rows(cfg, name, kk, sig, sampler_name, {
            "class_spread": float(cf.max() - cf.min()),
            "class_mass": float(cf.sum()),
            "unassigned": st.unassigned,
            "w1_exact_p0": wasserstein1(pts, exact_1),
            "w1_exact_pk": wasserstein1(pts, exact_k),
        })
    io.write_csv(out / "modes.csv", "toy1d_modes",
                 ("method", "mode", "label", "true_mean", "fraction", "mean", "std", "count"), mode_rows)
    io.write_csv(out / "metrics.csv", "metrics", _METRIC_HEADER, metric_rows)

    panels = [(name, io.read_points_csv(out / f"samples_{name}.csv")) for name in samples]
    lo, hi = float(mix.means.min()) - 1.5, float(mix.means.max()) + 1.5
    io.atomic_write_text(out / "histograms.svg", plots.histogram_panels(panels, lo, hi))

    tsr_cf = stats["tsr"].fractions[class_modes]
    tsr_spread = float(tsr_cf.max() - tsr_cf.min())
    cns_cf = stats["cns"].fractions[class_modes]
    cns_spread = float(cns_cf.max() - cns_cf.min())
    target = 1.0 / len(class_modes)
    w1_none = wasserstein1(samples["none"], exact_1)
    return [
        Check("tsr_class_modes_balanced", bool(np.all(np.abs(tsr_cf - target) <= 0.03)),
              f"fractions {np.round(tsr_cf, 4).tolist()} target {target:.4f} +/- 0.03"),
        Check("cns_spread_exceeds_tsr", cns_spread > tsr_spread,
              f"cns spread {cns_spread:.4f} vs tsr spread {tsr_spread:.4f}"),
        Check("none_matches_exact", w1_none < 0.05, f"W1 {w1_none:.4f} < 0.05"),
    ]


# ---------------------------------------------------------------------------
# toy2d

_TOY2D_METHODS = {
    "none_ddpm": ("none", sp.DDPM),
    "cns_ddpm": ("cns", sp.DDPM),
    "tsr_ddpm": ("tsr", sp.DDPM),
    "tsr_ddim": ("tsr", sp.DDIM),
    "none_ddim": ("none", sp.DDIM),
}


def _toy2d_policy(kind: str, cfg: dict):
    if kind == "none":
        return rs.NoRescale()
    if kind == "cns":
        return rs.CNS(float(cfg["k"]))
    return rs.TSR(float(cfg["k"]), float(cfg["tsr_sigma"]))


def run_toy2d(cfg: dict, out: Path, workers: int = 1) -> List[Check]:
    sched = _schedule(cfg)
    for m in cfg["methods"]:
        if m not in _TOY2D_METHODS:
            raise ConfigurationError(f"unknown toy2d method {m!r}; choose from {', '.join(_TOY2D_METHODS)}")
    jobs = []
    fields = {}
    for ds in cfg["datasets"]:
        fields[ds] = make_dataset(ds, int(cfg["dataset_n"]), int(cfg["dataset_seed"]))
        jobs += [(ds, m) for m in cfg["methods"]]

    def one(job):
        ds, m = job
        pol_kind, kind = _TOY2D_METHODS[m]
        steps = int(cfg["ddpm_steps"] if kind == sp.DDPM else cfg["ddim_steps"])
        conf = sp.SamplerConfig(kind, sched, steps, cfg["seed"], int(cfg["n"]), 2, block=int(cfg["block"]))
        return sp.run(conf, fields[ds], _toy2d_policy(pol_kind, cfg)).points

    results = dict(zip(jobs, _map(one, jobs, workers)))
    cov_rows, metric_rows = [], []
    checks: List[Check] = []
    for (ds, m), pts in results.items():
        io.write_points_csv(out / f"samples_{ds}_{m}.csv", pts)
        pol_kind, kind = _TOY2D_METHODS[m]
        kk = 1.0 if pol_kind == "none" else float(cfg["k"])
        sig = cfg["tsr_sigma"] if pol_kind == "tsr" else ""
        data = fields[ds].points
        d2 = ((pts[:, None, :] - data[None, :, :]) ** 2).sum(-1).min(axis=1)
        metrics = {"near_data_fraction": float(np.mean(d2 <= float(cfg["near_radius"]) ** 2))}
        if ds == "checkerboard":
            cov = grid_coverage(pts)
            for (i, j), f in zip(cov.cells, cov.fractions):
                cov_rows.append((ds, m, i, j, f))
            metrics["out_of_support"] = cov.out_of_support
            metrics["min_cell"] = float(cov.fractions.min())
        metric_rows += _metric_rows(cfg, pol_kind, kk, sig, kind, metrics)
    if cov_rows:
        io.write_csv(out / "coverage.csv", "toy2d_coverage", ("dataset", "method", "cell_i", "cell_j", "fraction"),
                     cov_rows)
    io.write_csv(out / "metrics.csv", "metrics", _METRIC_HEADER, metric_rows)

    for ds in cfg["datasets"]:
        panels = [(f"{ds} data", fields[ds].points)]
        panels += [(m, io.read_points_csv(out / f"samples_{ds}_{m}.csv")) for m in cfg["methods"]]
        io.atomic_write_text(out / f"scatter_{ds}.svg", plots.scatter_panels(panels, -2.5, 2.5))

    if "checkerboard" in cfg["datasets"]:
        cov = {m: grid_coverage(results[("checkerboard", m)]) for m in cfg["methods"]}
        corner_idx = [CHECKER_CELLS.index(c) for c in CHECKER_CORNERS]
        for m in cfg["methods"]:
            fr = cov[m].fractions
            if m.startswith("tsr"):
                checks.append(Check(f"{m}_keeps_all_cells", bool(fr.min() >= 0.075),
                                    f"min cell mass {fr.min():.4f} >= 0.075"))
            elif m.startswith("cns"):
                corners = fr[corner_idx]
                checks.append(Check(f"{m}_drops_corner", bool(corners.min() < 0.075),
                                    f"corner masses {np.round(corners, 4).tolist()} min < 0.075"))
            elif m.startswith("none"):
                dev = float(np.abs(fr - 1 / 8).max())
                checks.append(Check(f"{m}_uniform_cells", dev <= 0.02, f"max |cell - 1/8| {dev:.4f} <= 0.02"))
    return checks


# ---------------------------------------------------------------------------
# bounds

_BOUND_HEADER = ("t", "error_mc", "mc_stderr", "b_exp", "b_poly", "satisfied")


def run_bounds(cfg: dict, out: Path, workers: int = 1) -> List[Check]:
    sched = _schedule(cfg)
    mix = mixture_from_config(cfg["mixture"])
    k, n, seed = float(cfg["k"]), int(cfg["n"]), int(cfg["seed"])
    grid = np.linspace(float(cfg["t_min"]), float(cfg["t_max"]), int(cfg["t_points"]))
    single = GaussianMixture([1.0], mix.means[:1], mix.sigma)
    cases = [("main", mix, k), ("k1", mix, 1.0), ("single", single, k)]
    reports = _map(lambda c: th.validate_bounds(c[1], sched, c[2], grid, n, seed), cases, workers)

    io.write_csv(out / "bounds.csv", "bound_report", _BOUND_HEADER,
                 [tuple(r.row()[h] for h in _BOUND_HEADER) for r in reports[0]])
    summary = []
    for (name, m, kk), reps in zip(cases, reports):
        tight = [min(r.b_exp, r.b_poly) for r in reps]
        summary.append((name, m.n_components, kk, all(r.satisfied for r in reps),
                        max(r.error_mc for r in reps), min(tight)))
    io.write_csv(out / "summary.csv", "bound_summary",
                 ("case", "components", "k", "all_satisfied", "max_error_mc", "min_tightest_bound"), summary)

    _, rows = io.read_csv(out / "bounds.csv")
    arr = np.array([[float(v) for v in r[:5]] for r in rows])
    svg = plots.line_chart([("error_mc", arr[:, 0], arr[:, 1]), ("b_exp", arr[:, 0], arr[:, 3]),
                            ("b_poly", arr[:, 0], arr[:, 4])], "t", "value", logy=True)
    io.atomic_write_text(out / "bounds.svg", svg)

    main, k1, single_s = summary
    return [
        Check("bounds_all_satisfied", bool(main[3]), f"{sum(r.satisfied for r in reports[0])}/{len(grid)} rows"),
        Check("bounds_informative", bool(main[5] < 10.0), f"smallest min(B_exp, B_poly) {main[5]:.4g} < 10"),
        Check("error_zero_k1", k1[4] == 0.0, f"max error at k=1 is {k1[4]!r}"),
        Check("error_zero_single", single_s[4] == 0.0, f"max error for one component is {single_s[4]!r}"),
    ]


# ---------------------------------------------------------------------------
# cns-gap


def run_cns_gap(cfg: dict, out: Path, workers: int = 1) -> List[Check]:
    sched = _schedule(cfg)
    k = float(cfg["k"])
    xs = np.linspace(float(cfg["x_min"]), float(cfg["x_max"]), int(cfg["x_points"])).reshape(-1, 1)
    cases = [
        ("standard_normal", GaussianMixture([1.0], [[0.0]], 1.0), "exact N(0; I/k)"),
        ("shifted", mixture_from_config(cfg["shifted"]), "locally scaled mixture"),
        ("two_mode", mixture_from_config(cfg["two_mode"]), "locally scaled mixture"),
    ]
    rows, summary = [], []
    for name, mix, q0 in cases:
        worst = 0.0
        for t in cfg["t_values"]:
            gap = th.cns_gap(mix, sched, float(t), k, xs)
            worst = max(worst, float(gap.max()))
            rows += [(name, float(t), float(x), float(g)) for x, g in zip(xs[:, 0], gap)]
        summary.append((name, mix.n_components, k, worst, q0))
    io.write_csv(out / "gap.csv", "cns_gap", ("case", "t", "x", "gap"), rows)
    io.write_csv(out / "summary.csv", "cns_gap_summary", ("case", "components", "k", "max_gap", "q0"), summary)

    _, data = io.read_csv(out / "gap.csv")
    series = []
    mid = str(float(cfg["t_values"][len(cfg["t_values"]) // 2]))
    for name, _, _ in cases:
        sel = [r for r in data if r[0] == name and r[1] == mid]
        series.append((f"{name} t={mid}", np.array([float(r[2]) for r in sel]), np.array([float(r[3]) for r in sel])))
    io.atomic_write_text(out / "gap.svg", plots.line_chart(series, "x", "score gap"))

    by = {s[0]: s[3] for s in summary}
    return [
        Check("standard_normal_gap_zero", by["standard_normal"] < 1e-10, f"max gap {by['standard_normal']:.3g} < 1e-10"),
        Check("two_mode_gap_positive", by["two_mode"] > 0.05, f"max gap {by['two_mode']:.4g} > 0.05"),
    ]


# ---------------------------------------------------------------------------
# sweep


def _onset(ts: np.ndarray, r: np.ndarray, level: float, k: float) -> float:
    """Largest t (first hit while sampling backwards from t = 1) with r beyond ``level``."""
    if not min(1.0, k) < level < max(1.0, k):
        return float("nan")
    hit = (r > level) if k > 1 else (r < level)
    idx = np.nonzero(hit)[0]
    return float(ts[idx.max()]) if idx.size else float("nan")


def run_sweep(cfg: dict, out: Path, workers: int = 1) -> List[Check]:
    sched = _schedule(cfg)
    ts = np.linspace(sched.t_clip, sched.t_max, int(cfg["t_points"]))
    eta = sched.snr(ts)
    combos = [("k", float(k), float(cfg["k_sigma"])) for k in cfg["k_values"]]
    combos += [("sigma", float(cfg["sigma_k"]), float(s)) for s in cfg["sigma_values"]]
    curves = _map(lambda c: rs.tsr_factor(c[1], c[2], eta), combos, workers)
    rows, summary = [], []
    level = float(cfg["onset_r"])
    for (fam, k, s), r in zip(combos, curves):
        rows += [(fam, k, s, float(t), float(v)) for t, v in zip(ts, r)]
        summary.append((fam, k, s, float(r[0]), _onset(ts, r, level, k)))
    io.write_csv(out / "curves.csv", "tsr_curves", ("family", "k", "sigma", "t", "r"), rows)
    io.write_csv(out / "summary.csv", "tsr_curve_summary", ("family", "k", "sigma", "r_at_t_clip", "t_onset"),
                 summary)

    _, data = io.read_csv(out / "curves.csv")
    for fam in ("k", "sigma"):
        series = []
        for _, k, s in [c for c in combos if c[0] == fam]:
            sel = [r for r in data if r[0] == fam and float(r[1]) == k and float(r[2]) == s]
            series.append((f"k={k:g} sigma={s:g}", np.array([float(r[3]) for r in sel]),
                           np.array([float(r[4]) for r in sel])))
        io.atomic_write_text(out / f"curves_{fam}.svg", plots.line_chart(series, "t", "r_t"))

    k_rows = [x for x in summary if x[0] == "k"]
    asym = [abs(x[3] - x[1]) / x[1] for x in k_rows]
    s_rows = sorted([x for x in summary if x[0] == "sigma"], key=lambda x: x[2])
    onsets = [x[4] for x in s_rows]
    mono = all(np.isfinite(onsets)) and all(a < b for a, b in zip(onsets, onsets[1:]))
    flat = [x for x in k_rows if x[1] == 1.0]
    checks = [
        Check("asymptote_matches_k", max(asym) < 0.01, f"max relative gap {max(asym):.3g} < 0.01"),
        Check("onset_increases_with_sigma", bool(mono), f"onset t {[round(o, 4) for o in onsets]}"),
    ]
    if flat:
        idx = combos.index(("k", 1.0, float(cfg["k_sigma"])))
        checks.append(Check("k1_flat", bool(np.all(curves[idx] == 1.0)), "r == 1 everywhere"))
    return checks


RUNNERS: Dict[str, Callable] = {
    "toy1d": run_toy1d,
    "toy2d": run_toy2d,
    "bounds": run_bounds,
    "cns-gap": run_cns_gap,
    "sweep": run_sweep,
}


def run_experiment(cfg: dict, out_root, workers: int = 1):
    """Write ``manifest.json`` and all artifacts under ``<out_root>/<experiment>/``."""
    out = Path(out_root) / cfg["experiment"]
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "manifest.json", manifest(cfg))
    checks = RUNNERS[cfg["experiment"]](cfg, out, workers)
    io.write_csv(out / "checks.csv", "checks", ("check", "passed", "detail"),
                 [(c.name, c.passed, c.detail.replace(",", ";")) for c in checks])
    return out, checks
