import filecmp
import json
import os

import pytest

from conftest import config_path
from deepquench.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main


def run(tmp_path, command, cfg, name="run", *extra):
    code = main([command, cfg, "--out", str(tmp_path), "--name", name, *extra])
    out = tmp_path / name
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() \
        else None
    return code, out, summary


def test_simulate_stationary(tmp_path):
    code, out, summary = run(tmp_path, "simulate", config_path("stationary.json"))
    assert code == EXIT_OK
    assert summary["max_abs_phi"] == 0.0
    assert summary["passed"]
    manifest = json.loads((out / "manifest.json").read_text())
    for key in ("config", "resolved", "versions", "kernel_backend", "git_describe"):
        assert key in manifest
    assert manifest["resolved"]["solver"]["newton_tol"] == 1e-10
    assert (out / "phi_0000.csv").exists() and (out / "scalars.csv").exists()
    assert (out / "scalars.csv").read_text().startswith("t,")


def test_gradient_check_shipped_example(tmp_path):
    code, _, summary = run(tmp_path, "gradient-check", config_path("gradient_check_1d.json"))
    assert code == EXIT_OK
    assert summary["taylor_order"] >= 1.9
    assert summary["negative_control_order"] < 1.2


def test_missing_field_exit_one(tmp_path, capsys):
    data = json.load(open(config_path("tracking.json")))
    del data["model"]["theta_c"]
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(data, indent=2))
    assert main(["simulate", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "theta_c" in err and "bad.json:" in err


def test_solver_failure_exit_two(tmp_path):
    data = json.load(open(config_path("obstacle_contact.json")))
    data["potential"] = {"kind": "logarithmic", "gamma": 0.1, "k": 2.0}
    cfg = tmp_path / "log.json"
    cfg.write_text(json.dumps(data))
    code, out, summary = run(tmp_path, "simulate", str(cfg))
    assert code == EXIT_SOLVER
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "SolverError" and err["level"] > 0
    assert summary is None


def test_failed_check_exit_three(tmp_path):
    data = json.load(open(config_path("tracking.json")))
    data["optimizer"] = {"max_iter": 1}
    cfg = tmp_path / "short.json"
    cfg.write_text(json.dumps(data))
    code, _, summary = run(tmp_path, "optimize", str(cfg))
    assert code == EXIT_CHECK
    assert summary["checks"]["converged"] is False and not summary["passed"]


def test_obstacle_simulation(tmp_path):
    code, _, summary = run(tmp_path, "simulate-obstacle", config_path("obstacle_contact.json"))
    assert code == EXIT_OK
    assert summary["max_abs_phi"] == 1.0
    assert summary["subdiff_residual"] <= 1e-8


def test_adjoint_command(tmp_path):
    code, out, summary = run(tmp_path, "adjoint", config_path("gradient_check_1d.json"))
    assert code == EXIT_OK
    assert summary["lambda"] >= 0
    assert (out / "p_0000.csv").exists() and (out / "grad_0050.csv").exists()


def test_adjoint_refuses_obstacle_config(tmp_path):
    code = main(["adjoint", config_path("obstacle_contact.json"), "--out", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_rerun_from_manifest_reproduces_summary(tmp_path):
    _, out, first = run(tmp_path, "adjoint", config_path("gradient_check_1d.json"), "a")
    code, _, second = run(tmp_path, "adjoint", str(out / "manifest.json"), "b")
    assert code == EXIT_OK
    assert first == second


def test_run_directories_do_not_collide(tmp_path):
    run(tmp_path, "simulate", config_path("stationary.json"), "same")
    run(tmp_path, "simulate", config_path("stationary.json"), "same")
    assert sorted(os.listdir(tmp_path)) == ["same", "same-1"]


def test_bad_threads(tmp_path):
    assert main(["simulate", config_path("stationary.json"), "--out", str(tmp_path),
                 "--threads", "0"]) == EXIT_CONFIG


def test_identical_csv_across_runs(tmp_path):
    for name in ("a", "b"):
        run(tmp_path, "simulate", config_path("gradient_check_1d.json"), name, "--threads", "1")
    names = sorted(f for f in os.listdir(tmp_path / "a") if f.endswith(".csv"))
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names,
                                               shallow=False)
    assert not mismatch and not errors and len(match) == len(names) > 0
