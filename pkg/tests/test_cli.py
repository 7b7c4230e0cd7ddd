import os
import subprocess
import sys

import pytest
import scipy.io

from viscoflow import cli, io
from viscoflow.solver import SolveReport


def test_custom_without_config_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--case", "custom"])
    assert info.value.code == 2
    assert "bounds" in capsys.readouterr().err


def test_missing_case_is_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["run"])
    assert info.value.code == 2


def test_invalid_parameter_exit_nonzero(tmp_path, capsys):
    code = cli.main(["run", "--case", "reservoir", "--nx", "2", "--p", "0.5",
                     "--out", str(tmp_path)])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_unwritable_output_exit_nonzero(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = cli.main(["run", "--case", "reservoir", "--nx", "2", "--out", str(blocker / "sub")])
    assert code == 1


def test_small_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "res"
    code = cli.main(["run", "--case", "reservoir", "--nx", "4", "--tol", "1e-8",
                     "--out", str(out), "--dump-matrix"])
    assert code == 0
    stdout = capsys.readouterr().out.splitlines()
    report = io.read_stats_json(out / "reservoir_stats.json")
    assert isinstance(report, SolveReport) and report.converged
    iter_lines = [line for line in stdout if not line.startswith("#")]
    assert len(iter_lines) == report.iterations + 1
    assert float(iter_lines[-1].split()[1]) <= 1e-8
    for name in ("reservoir.vtk", "reservoir_residuals.csv", "reservoir_residuals.svg",
                 "reservoir_jacobian.mtx"):
        assert (out / name).stat().st_size > 0
    J = scipy.io.mmread(str(out / "reservoir_jacobian.mtx"))
    assert J.shape[0] == J.shape[1]
    _, cells, _ = io.read_vtk(out / "reservoir.vtk")
    assert len(cells) == 64


def test_outputs_byte_identical(tmp_path):
    args = ["run", "--case", "cavity", "--nx", "3", "--tol", "1e-8", "-q"]
    for d in ("a", "b"):
        assert cli.main(args + ["--out", str(tmp_path / d)]) == 0
    for name in ("cavity.vtk", "cavity_residuals.csv", "cavity_stats.json",
                 "cavity_residuals.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_output_toggles(tmp_path):
    out = tmp_path / "t"
    assert cli.main(["run", "--case", "cavity", "--nx", "2", "--no-vtk", "--no-svg",
                     "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["cavity_residuals.csv", "cavity_stats.json"]


def test_custom_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("case = custom\nbounds = 0 2 0 1\nnx = 4\ntau_s = 0.5\n"
                   "velocity_top = 1 0\nforce = 0 -1\nno_vtk = yes\n")
    out = tmp_path / "c"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    report = io.read_stats_json(out / "custom_stats.json")
    assert report.converged and report.parameters["tau_s"] == 0.5
    assert not (out / "custom.vtk").exists()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("case = cavity\nnx = 2\ntau_s = 0.5\n")
    args = cli._build_parser().parse_args(["run", "--config", str(cfg), "--tau-s", "3"])
    settings, _ = cli.resolve_run_config(args)
    assert settings["tau_s"] == 3.0 and settings["nx"] == 2


def _module(*args, env=None):
    return subprocess.run([sys.executable, "-m", "viscoflow", *args], capture_output=True,
                          text=True, env={**os.environ, **(env or {})}, timeout=600)


def test_verify_subcommand():
    res = _module("verify", "--quick")
    assert res.returncode == 0, res.stdout + res.stderr
    lines = res.stdout.splitlines()
    assert lines[0].startswith("1..")
    assert all(line.startswith("ok ") for line in lines[1:])


def test_python_fallback_selected():
    code = "from viscoflow import kernels; print(kernels.BACKEND)"
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**os.environ, "VISCOFLOW_KERNELS": "python"})
    assert res.stdout.strip() == "python"


def test_run_with_fallback_matches(tmp_path):
    args = ("run", "--case", "cavity", "--nx", "3", "--tol", "1e-8", "--no-vtk", "--no-svg")
    a = _module(*args, "--out", str(tmp_path / "a"), env={"VISCOFLOW_KERNELS": "python"})
    b = _module(*args, "--out", str(tmp_path / "b"))
    assert a.returncode == 0 and b.returncode == 0, a.stderr + b.stderr
    ra = io.read_stats_json(tmp_path / "a" / "cavity_stats.json")
    rb = io.read_stats_json(tmp_path / "b" / "cavity_stats.json")
    assert ra.iterations == rb.iterations and ra.active_cells == rb.active_cells
