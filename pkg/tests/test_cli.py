import json
import subprocess
import sys

import numpy as np
import pytest

from facetflow import cli
from facetflow.errors import ConfigError


@pytest.fixture(scope="module")
def plug_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "p1"
    code = cli.run(["solve", "--problem", "plug1d", "--out", str(out), "--format", "csv,vtk"])
    return code, out


def test_solve_plug(plug_run):
    code, out = plug_run
    assert code == 0
    lines = (out / "u.csv").read_text().splitlines()
    assert lines[0] == "x,u,du,Veps,Gdelta"
    assert len(lines) == 514
    last = (out / "report.txt").read_text().strip().splitlines()[-1]
    assert last.startswith("plug_value: ")
    assert float(last.split(": ")[1]) == pytest.approx(0.25, abs=5e-3)
    meta = json.loads((out / "meta.json").read_text())
    assert meta["problem"] == "plug1d" and meta["grid"]["resolution"] == [513]
    assert (out / "u.vtk").read_text().startswith("# vtk DataFile Version 3.0")


def test_diagnose_reproduces_report(plug_run, capsys):
    _, out = plug_run
    assert cli.run(["diagnose", "--out", str(out)]) == 0
    assert (out / "diagnose.txt").read_text() == (out / "diagnostics.txt").read_text()


def test_export_rewrites_formats(plug_run):
    _, out = plug_run
    (out / "u.vtk").unlink()
    assert cli.run(["export", "--out", str(out), "--format", "vtk"]) == 0
    body = (out / "u.vtk").read_text().splitlines()
    assert body[4] == "DIMENSIONS 513 1 1"
    assert cli.run(["export", "--out", str(out), "--format", "hdf5"]) == cli.EXIT_CONFIG


def test_unknown_problem(capsys):
    assert cli.run(["solve", "--problem", "nosuch"]) == 2
    assert "unknown builtin problem" in capsys.readouterr().err


def test_ineligible_schedule_rejected_before_solving(tmp_path, capsys):
    code = cli.run(["solve", "--problem", "plug1d", "--eps0", "0.01", "--eps-steps", "2", "--delta", "0.01",
                    "--out", str(tmp_path / "x")])
    assert code == 2
    assert "delta/8" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_config_file_and_custom_problem(tmp_path):
    cfg = {
        "problem": {"dim": 2, "resolution": 17, "f": "4*exp(-r**2)", "g": "0.1*x*y", "name": "bump"},
        "density": {"b": 0.5, "p": 2.5},
        "schedule": {"delta": 0.2, "eps": [0.1, 0.05, 0.02]},
        "solver": {"tol_residual_rel": 1e-9},
        "diagnostics": {"radii_cells": [2, 3, 4]},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "bump"
    assert cli.run(["solve", "--config", str(path), "--out", str(out)]) == 0
    header = (out / "u.csv").read_text().splitlines()[0]
    assert header == "x,y,u,ux,uy,veps,g2d_x,g2d_y"
    data = np.loadtxt(out / "u.csv", delimiter=",", skiprows=1)
    edge = np.isclose(np.abs(data[:, 0]), 1.0) | np.isclose(np.abs(data[:, 1]), 1.0)
    np.testing.assert_allclose(data[edge, 2], 0.1 * data[edge, 0] * data[edge, 1], atol=1e-14)
    assert (out / "cells.csv").exists()


@pytest.mark.parametrize("cfg, field", [
    ({"problem": {"f": "__import__('os')"}}, "problem.f"),
    ({"problem": {"f": "open(1)"}}, "problem.f"),
    ({"problem": {"f": "x +"}}, "problem.f"),
    ({"schedule": {"eps": [0.1, 0.2]}}, "schedule"),
    ({"density": {"p": 0.5}}, "density"),
    ({"solver": {"newton": 3}}, "solver"),
    ({"problem": 3}, "problem"),
])
def test_config_errors_name_the_field(tmp_path, capsys, cfg, field):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert cli.run(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert f"config error: {field}" in capsys.readouterr().err


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert cli.run(["solve", "--config", str(path)]) == 2


def test_expression_evaluator():
    xy = np.array([[0.0, 1.0], [2.0, -1.0]])
    np.testing.assert_allclose(cli.evaluate_expression("x**2 + sin(pi*y)", xy), [0.0 + 0.0, 4.0], atol=1e-15)
    np.testing.assert_array_equal(cli.evaluate_expression(3, xy), [3.0, 3.0])
    with pytest.raises(ConfigError):
        cli.evaluate_expression("x.__class__", xy)
    with pytest.raises(ConfigError):
        cli.evaluate_expression("1/x", xy)


def test_nonconvergence_exit_code(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"solver": {"max_newton": 1}}))
    assert cli.run(["solve", "--problem", "plug1d", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_verify_exit_zero(capsys):
    assert cli.run(["verify", "--seed", "7", "--samples", "100000"]) == 0
    assert "asserting suites failed: none" in capsys.readouterr().out


def test_bench_selection_and_unknown(capsys):
    assert cli.run(["bench", "--problem", "1"]) == 0
    assert "PASS  [1]" in capsys.readouterr().out
    assert cli.run(["bench", "--problem", "9"]) == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "facetflow", "solve", "--problem", "nosuch"],
                         capture_output=True, text=True)
    assert res.returncode == 2
    res = subprocess.run([sys.executable, "-m", "facetflow", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "verify" in res.stdout
