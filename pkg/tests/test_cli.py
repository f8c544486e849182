import json
import subprocess
import sys

import pytest

from steklov_lab.cli import run
from steklov_lab.reports import read_triplets


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


COARSE = {"kind": "disk", "radius": 1.0, "target_h": 0.2}


def test_spectrum_success(tmp_path):
    cfg = write(tmp_path, {"experiment": "spectrum", "domain": COARSE, "refinements": 1,
                           "tolerances": {"eig_rel_tol": 0.05}, "export_matrices": True})
    out = tmp_path / "out"
    assert run(["spectrum", "--config", str(cfg), "--out", str(out)]) == 0
    names = set(files(out))
    assert {"spectrum.json", "convergence.csv", "spectrum.svg",
            "stiffness.triplets", "boundary_mass.triplets"} <= names
    rec = json.loads((out / "spectrum.json").read_text())
    assert rec["seed"] == 0 and "output_dir" not in rec["config"]
    K = read_triplets(out / "stiffness.triplets")
    assert K.shape[0] == K.shape[1]


def test_tolerance_violation_exit_one(tmp_path):
    cfg = write(tmp_path, {"experiment": "spectrum", "domain": COARSE,
                           "tolerances": {"eig_rel_tol": 1e-9}})
    out = tmp_path / "out"
    assert run(["spectrum", "--config", str(cfg), "--out", str(out)]) == 1
    # results are still written so the violation can be inspected
    assert (out / "spectrum.json").exists()


@pytest.mark.parametrize("cfg", [
    {"experiment": "spectrum", "bogus": 1},
    {"experiment": "spectrum", "domain": {"kind": "disk", "target_h": 0.001}},
    {"experiment": "spectrum", "metric": {"kind": "tensor", "components": [
        {"i": 0, "j": 0, "field": 1.0}, {"i": 1, "j": 1, "field": -1.0}]}},
])
def test_config_errors_exit_two_without_output(tmp_path, cfg):
    p = write(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["spectrum", "--config", str(p), "--out", str(out)]) == 2
    assert not out.exists()


def test_experiment_mismatch_exit_two(tmp_path):
    p = write(tmp_path, {"experiment": "scan"})
    assert run(["spectrum", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert run(["run", "--out", str(tmp_path / "o")]) == 2


def test_step_too_large_exit_three(tmp_path):
    p = write(tmp_path, {
        "experiment": "variation-check", "domain": COARSE,
        "perturbation": {"kind": "general", "steps": [5.0, 2.5],
                         "components": [{"i": 0, "j": 0, "field": -1.0},
                                        {"i": 1, "j": 1, "field": -1.0}]}})
    out = tmp_path / "out"
    assert run(["variation-check", "--config", str(p), "--out", str(out)]) == 3
    assert not out.exists()


def test_run_dispatches_on_config(tmp_path):
    p = write(tmp_path, {"experiment": "wucp", "domain": COARSE, "eigen_count": 5,
                         "perturbation": {"trials": 2}})
    out = tmp_path / "out"
    assert run(["run", "--config", str(p), "--out", str(out)]) == 0
    assert (out / "wucp.json").exists()


def test_scan_byte_identical_across_threads(tmp_path):
    p = write(tmp_path, {"experiment": "scan", "domain": COARSE, "eigen_count": 6,
                         "perturbation": {"trials": 4, "amplitude": 0.2}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["scan", "--config", str(p), "--out", str(a), "--threads", "1"]) == 0
    assert run(["scan", "--config", str(p), "--out", str(b), "--threads", "4"]) == 0
    assert files(a) == files(b)


def test_seed_override_changes_scan(tmp_path):
    p = write(tmp_path, {"experiment": "scan", "domain": COARSE, "eigen_count": 4,
                         "perturbation": {"trials": 1}})
    a, b = tmp_path / "a", tmp_path / "b"
    run(["scan", "--config", str(p), "--out", str(a)])
    run(["scan", "--config", str(p), "--out", str(b), "--seed", "9"])
    assert files(a)["scan.json"] != files(b)["scan.json"]


def test_oracle_subcommand(tmp_path):
    out = tmp_path / "o"
    assert run(["oracle", "annulus", "--count", "3", "--out", str(out)]) == 0
    lines = (out / "oracle.csv").read_text().splitlines()
    assert lines[0] == "index,value,mode"
    assert lines[1] == "0,0.0,0"
    assert float(lines[2].split(",")[1]) == pytest.approx(0.43845, abs=1e-5)
    assert run(["oracle", "disk", "--count", "0", "--out", str(out)]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "steklov_lab", "oracle", "disk", "--radius", "2",
                        "--count", "3", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "oracle.csv").read_text() == "index,value,mode\n0,0.0,0\n1,0.5,1\n2,0.5,1\n"
