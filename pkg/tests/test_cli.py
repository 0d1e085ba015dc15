import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tsr import artifacts as io
from tsr import experiments as ex
from tsr import plots
from tsr.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, load_config, main
from tsr.errors import ConfigurationError

FAST_TOY1D = {"n": 600, "steps": 60}
FAST_TOY2D = {"n": 200, "dataset_n": 300, "ddpm_steps": 20, "ddim_steps": 10}


def _csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def test_csv_schema_and_float_round_trip(tmp_path):
    vals = [0.1, 1 / 3, 1e-300, -2.5e17]
    path = io.write_csv(tmp_path / "a.csv", "demo", ("name", "x", "ok"), [("r", v, True) for v in vals])
    lines = path.read_text().splitlines()
    assert lines[0] == "# tsr-artifact schema=1 table=demo"
    assert lines[1] == "name,x,ok" and lines[2].endswith(",true")
    header, rows = io.read_csv(path)
    assert [float(r[1]) for r in rows] == vals
    assert [p.name for p in tmp_path.iterdir()] == ["a.csv"]


def test_points_csv_round_trip(tmp_path):
    pts = np.random.default_rng(0).normal(size=(7, 3))
    io.write_points_csv(tmp_path / "p.csv", pts)
    assert (tmp_path / "p.csv").read_text().splitlines()[1] == "x0,x1,x2"
    assert np.array_equal(io.read_points_csv(tmp_path / "p.csv"), pts)


def test_atomic_write_cleans_up_on_failure(tmp_path):
    with pytest.raises(TypeError):
        io.write_json(tmp_path / "bad.json", {"x": object()})
    assert list(tmp_path.iterdir()) == []


def test_plots_are_valid_svg():
    r = np.random.default_rng(0)
    svgs = [
        plots.histogram_panels([("a", r.normal(size=100)), ("b<c", r.normal(size=50))], -3, 3),
        plots.scatter_panels([("s", r.uniform(-3, 3, (100, 2)))], -2.5, 2.5),
        plots.line_chart([("l", np.arange(5.0), np.arange(5.0) + 1)], "t", "r", logy=True),
        plots.line_chart([("flat", np.arange(3.0), np.zeros(3))], "t", "r"),
    ]
    for svg in svgs:
        assert ET.fromstring(svg).tag.endswith("svg")


def test_resolve_config_layers():
    cfg = ex.resolve_config("bounds", {"k": 2.0}, {"k": 3.0, "seed": 4})
    assert cfg["k"] == 3.0 and cfg["seed"] == 4 and cfg["experiment"] == "bounds"
    with pytest.raises(ConfigurationError):
        ex.resolve_config("bounds", {"bogus": 1})
    with pytest.raises(ConfigurationError):
        ex.resolve_config("toy3d")


def test_load_config_formats(tmp_path):
    (tmp_path / "c.toml").write_text('k = 2.0\n[mixture]\nmeans = [[-1.0], [1.0]]\nsigma = 0.2\n')
    assert load_config(tmp_path / "c.toml") == {"k": 2.0, "mixture": {"means": [[-1.0], [1.0]], "sigma": 0.2}}
    (tmp_path / "m.json").write_text(json.dumps(ex.manifest(ex.resolve_config("sweep"))))
    assert load_config(tmp_path / "m.json")["experiment"] == "sweep"
    (tmp_path / "bad.toml").write_text("k = = 2")
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "bad.toml")
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.toml")


@pytest.mark.parametrize("experiment,extra", [
    ("sweep", []), ("cns-gap", []), ("bounds", ["--set", "n=2000"]),
    ("toy1d", [f"--set={k}={v}" for k, v in FAST_TOY1D.items()]),
    ("toy2d", [f"--set={k}={v}" for k, v in FAST_TOY2D.items()]),
])
def test_manifest_rerun_is_byte_identical(tmp_path, experiment, extra):
    assert main([experiment, "--out", str(tmp_path / "a"), "--seed", "3", *extra]) == EXIT_OK
    first = tmp_path / "a" / experiment
    manifest = first / "manifest.json"
    assert main([experiment, "--config", str(manifest), "--out", str(tmp_path / "b")]) == EXIT_OK
    second = tmp_path / "b" / experiment
    assert _csv_bytes(first) == _csv_bytes(second) and len(_csv_bytes(first)) >= 2
    assert manifest.read_bytes() == (second / "manifest.json").read_bytes()
    for name, data in _csv_bytes(first).items():
        assert data.startswith(b"# tsr-artifact schema=1")
    assert list(first.glob("*.svg"))


def test_bounds_csv_columns(tmp_path):
    assert main(["bounds", "--out", str(tmp_path), "--check", "--set", "n=2000"]) == EXIT_OK
    header, rows = io.read_csv(tmp_path / "bounds" / "bounds.csv")
    assert header == ["t", "error_mc", "mc_stderr", "b_exp", "b_poly", "satisfied"]
    assert len(rows) == 20 and all(r[5] == "true" for r in rows)


def test_check_failure_exit_code(tmp_path):
    assert main(["cns-gap", "--out", str(tmp_path), "--check", "--set", "k=1.0"]) == EXIT_CHECK
    assert main(["cns-gap", "--out", str(tmp_path), "--set", "k=1.0"]) == EXIT_OK


def test_config_error_exit_codes(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path), "--set", "nope=1"]) == EXIT_CONFIG
    assert main(["sweep", "--out", str(tmp_path), "--set", "k_values=[0]"]) == EXIT_CONFIG
    assert main(["sample", "--sampler", "ddim", "--policy", "cns", "--k", "4", "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG
    assert main(["sweep", "--workers", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as e:
        main(["sweep", "--nonsense"])
    assert e.value.code == EXIT_CONFIG


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["sweep", "--out", str(blocker)]) == EXIT_IO


def test_sample_command(tmp_path):
    out = tmp_path / "batch.csv"
    args = ["sample", "--sampler", "ddim", "--schedule", "vp", "--steps", "50", "--policy", "tsr", "--k", "4",
            "--sigma", "0.5", "--n", "5000", "--seed", "7", "--out", str(out)]
    assert main(args) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# tsr-artifact schema=1") and lines[1] == "x0"
    x = io.read_points_csv(out)
    assert x.shape == (5000, 1)
    assert abs(x.std() / 0.25 - 1) < 0.05 and abs(x.mean() - 2) < 0.03
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["meta"]["policy"] == {"policy": "tsr", "k": 4.0, "sigma": 0.5}
    assert side["config"]["seed"] == 7
    first = out.read_bytes()
    assert main(args) == EXIT_OK and out.read_bytes() == first


def test_sample_dataset_and_cfg(tmp_path):
    out = tmp_path / "cb.csv"
    assert main(["sample", "--dataset", "checkerboard", "--steps", "20", "--n", "50", "--out", str(out)]) == EXIT_OK
    assert io.read_points_csv(out).shape == (50, 2)
    cfg = tmp_path / "mix.toml"
    cfg.write_text('[mixture]\nmeans = [[-3.0], [3.0]]\nsigma = 0.3\nlabels = [0, 1]\n')
    out2 = tmp_path / "cfg.csv"
    assert main(["sample", "--config", str(cfg), "--policy", "cfg", "--w", "5", "--class", "0", "--steps", "100",
                 "--n", "500", "--out", str(out2)]) == EXIT_OK
    assert np.mean(io.read_points_csv(out2) < 0) > 0.99


def test_workers_do_not_change_outputs(tmp_path):
    sets = [f"--set={k}={v}" for k, v in FAST_TOY2D.items()] + ["--set", 'datasets=["checkerboard"]']
    assert main(["toy2d", "--out", str(tmp_path / "a"), *sets]) == EXIT_OK
    assert main(["toy2d", "--out", str(tmp_path / "b"), "--workers", "3", *sets]) == EXIT_OK
    assert _csv_bytes(tmp_path / "a" / "toy2d") == _csv_bytes(tmp_path / "b" / "toy2d")


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "tsr", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "toy1d" in r.stdout
