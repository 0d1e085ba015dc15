"""Command-line entry point: ``tsr <experiment> [options]`` and ``tsr sample``.

Exit codes: 0 success, 2 configuration error, 3 failed ``--check``, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import artifacts as io
from . import experiments as ex
from . import rescale as rs
from . import sampler as sp
from .errors import ConfigurationError, TSRError
from .schedule import from_config as schedule_from_config
from .scorefield import make_dataset, mixture_from_config

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_IO = 0, 2, 3, 4

SAMPLE_DEFAULTS = {
    "sampler": "ddpm", "steps": None, "grid": None, "block": 4096, "seed": 0, "n": 1000,
    "schedule": "vp", "beta_min": 0.1, "beta_max": 20.0, "t_clip": 1e-3,
    "policy": "none", "k": 1.0, "sigma": 1.0, "w": 1.0, "class": 1,
    "mixture": {"means": [[2.0]], "sigma": 0.5},
    "dataset": None, "dataset_n": 4000, "dataset_seed": 1,
}


def load_config(path) -> dict:
    """Read a TOML or JSON config; a run manifest yields its embedded config."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {p}: {e}") from None
    try:
        data = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise ConfigurationError(f"cannot parse config {p}: {e}") from None
    if isinstance(data.get("config"), dict) and "experiment" in data:
        data = dict(data["config"])
    return data


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except ValueError:
            out[key] = raw
    return out


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", help="TOML or JSON config file (a manifest.json also works)")
    p.add_argument("--out", help=out_help)
    p.add_argument("--seed", type=int, help="base seed (u64)")
    p.add_argument("--check", action="store_true", help="exit 3 unless all acceptance checks pass")
    p.add_argument("--workers", type=int, default=1, help="concurrent runs within the experiment")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (JSON value)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ex.EXPERIMENTS:
        _common(sub.add_parser(name, help=f"run the {name} experiment"), "output root (default: runs)")
    s = sub.add_parser("sample", help="draw one batch with a chosen sampler and policy")
    _common(s, "output CSV path (default: batch.csv)")
    s.add_argument("--sampler", choices=sp.KINDS + tuple(sp._ALIASES))
    s.add_argument("--schedule", choices=("vp", "flow"))
    s.add_argument("--steps", type=int)
    s.add_argument("--policy", choices=("none", "tsr", "cns", "cfg"))
    s.add_argument("--k", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--w", type=float)
    s.add_argument("--class", dest="cls", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--dataset", choices=("checkerboard", "swissroll"))
    return parser


def _sample(args, file_cfg: dict) -> int:
    cfg = dict(SAMPLE_DEFAULTS)
    overrides = {**file_cfg, **_parse_set(args.set)}
    flags = {"sampler": args.sampler, "schedule": args.schedule, "steps": args.steps, "policy": args.policy,
             "k": args.k, "sigma": args.sigma, "w": args.w, "class": args.cls, "n": args.n, "seed": args.seed,
             "dataset": args.dataset}
    overrides.update({k: v for k, v in flags.items() if v is not None})
    for key, val in overrides.items():
        if key not in cfg:
            raise ConfigurationError(f"unknown key {key!r} for sample")
        cfg[key] = val
    sched = schedule_from_config(cfg)
    if cfg["dataset"]:
        field_ = make_dataset(cfg["dataset"], int(cfg["dataset_n"]), int(cfg["dataset_seed"]))
    else:
        field_ = mixture_from_config(cfg["mixture"])
    policy = rs.policy_from_dict({"policy": cfg["policy"], "k": cfg["k"], "sigma": cfg["sigma"],
                                  "w": cfg["w"], "class": cfg["class"]})
    conf = sp.SamplerConfig(cfg["sampler"], sched, cfg["steps"], int(cfg["seed"]), int(cfg["n"]), field_.dim,
                            block=int(cfg["block"]), grid=cfg["grid"])
    batch = sp.run(conf, field_, policy, workers=max(1, args.workers))
    out = Path(args.out or "batch.csv")
    io.write_points_csv(out, batch.points)
    io.write_json(out.with_suffix(".json"), {"config": cfg, "meta": batch.meta})
    print(f"wrote {len(batch.points)} points to {out}")
    return EXIT_OK


def _experiment(args, file_cfg: dict) -> int:
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = ex.resolve_config(args.command, file_cfg, overrides)
    out, checks = ex.run_experiment(cfg, Path(args.out or "runs"), workers=max(1, args.workers))
    print(f"artifacts in {out}")
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    if args.check and not all(c.passed for c in checks):
        return EXIT_CHECK
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_cfg = load_config(args.config) if args.config else {}
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError("--workers must be at least 1")
        if args.command == "sample":
            return _sample(args, file_cfg)
        return _experiment(args, file_cfg)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (TSRError, KeyError, TypeError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
