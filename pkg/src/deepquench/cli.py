"""Command-line entry point: ``deepquench <subcommand> CONFIG [--out DIR]``.

Exit status: 0 success, 1 configuration error, 2 solver failure (details in
``error.json``), 3 an invariant check recorded in ``summary.json`` failed.
"""

import argparse
import datetime
import logging
import os
import platform
import subprocess
import sys
import time

import numpy as np

from . import __version__, _kernels
from .adjoint import lambda_pairing
from .config import load_config
from .errors import ConfigError, DomainError, SolverError
from .geometry import norm_q
from .io import write_json, write_levels, write_series_csv, write_trajectory
from .objective import cost_terms, evaluate_cost
from .optimizer import bang_bang_fraction, projected_gradient, projection_formula_residual
from .oracles import taylor_test
from .problem import ReducedCost
from .quench import (approximate_optimal_control, gamma_pair_study, is_nonincreasing,
                     state_quench_sweep)
from .state import mean_value

log = logging.getLogger("deepquench")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3
LAMBDA_FLOOR = -1e-12
SUBDIFF_TOL = 1e-8
NEGATIVE_CONTROL_MAX = 1.2
QUENCH_SLOPE = (0.45, 1.1)


def _versions():
    import scipy

    out = {"deepquench": __version__, "python": platform.python_version(),
           "numpy": np.__version__, "scipy": scipy.__version__}
    try:
        import numba
        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        out["numba"] = None
    return out


def _git_describe():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() or "unknown"


def _make_run_dir(root, command, name=None):
    stamp = name or f"{command}-{datetime.datetime.now().strftime('%Y%m%dT%H%M%S')}"
    path = os.path.join(root, stamp)
    base, n = path, 1
    while os.path.exists(path):
        path = f"{base}-{n}"
        n += 1
    os.makedirs(path)
    return path


def _manifest(run, args, backend):
    p = run.problem
    return {
        "command": args.command,
        "config_path": os.path.abspath(args.config),
        "config": run.raw,
        "resolved": {
            "grid": {"dimension": p.grid.dimension, "extents": p.grid.extents,
                     "cells": p.grid.cells, "spacing": p.grid.spacing},
            "time": {"horizon": p.tg.horizon, "steps": p.tg.steps, "dt": p.tg.dt},
            "potential": {"kind": p.potential.kind, "gamma": p.potential.gamma,
                          "k": p.potential.k, "custom_f2": p.potential.custom_f2 is not None},
            "phi0_range": {"r_lo": run.phi0_range[0], "r_hi": run.phi0_range[1]},
            "solver": vars(p.solver),
            "optimizer": vars(run.optimizer),
            "schedule": {"gammas": run.schedule.gammas, "warm_start": run.schedule.warm_start,
                         "pairs": run.pairs, "rel_tol": run.rel_tol},
            "gradient_check": run.gradient_check,
        },
        "threads": args.threads,
        "kernel_backend": backend,
        "versions": _versions(),
        "git_describe": _git_describe(),
    }


def _bound_checks(traj, obstacle):
    s = traj.stats
    if obstacle:
        return {"phi_within_obstacle": s["max_abs_phi"] <= 1.0,
                "subdiff_residual_ok": s["subdiff_residual"] <= SUBDIFF_TOL}
    return {"phi_strictly_interior": s["max_abs_phi"] < 1.0}


def _scalar_series(out, traj):
    g = traj.grid
    cols = np.column_stack([
        [mean_value(f, g) for f in traj.phi],
        np.abs(traj.phi).max(axis=1),
        [mean_value(f, g) for f in traj.v],
    ])
    write_series_csv(os.path.join(out, "scalars.csv"), cols, traj.tg.times)


def _state_summary(run, traj, u):
    p = run.problem
    terms = cost_terms(traj, u, p.objective)
    summary = dict(traj.stats)
    summary.update({
        "cost": float(sum(terms)),
        "cost_terms": [float(t) for t in terms],
        "norms": traj.norms(),
        "conservation_defect": traj.conservation_defect(u),
        "r_lo": run.phi0_range[0], "r_hi": run.phi0_range[1],
    })
    return summary


def cmd_simulate(run, args, out, obstacle=False):
    p = run.problem
    if obstacle:
        p = p.with_potential(p.potential.as_obstacle())
    u = run.control.values
    traj = p.solve(u)
    write_trajectory(out, traj, run.every)
    _scalar_series(out, traj)
    summary = _state_summary(run, traj, u)
    summary["potential"] = p.potential.kind
    return summary, _bound_checks(traj, p.potential.is_obstacle)


def cmd_adjoint(run, args, out):
    p = run.problem
    if p.potential.is_obstacle:
        raise ConfigError("adjoint: needs a logarithmic potential")
    u = run.control.values
    traj = p.solve(u)
    adj = p.adjoint(traj)
    grad = ReducedCost(p).gradient(u)
    write_trajectory(out, traj, run.every)
    write_levels(out, "p", adj.p, p.grid, run.every)
    write_levels(out, "q", adj.q, p.grid, run.every)
    write_levels(out, "grad", grad, p.grid, run.every)
    lam = lambda_pairing(traj, adj, adj.p, p.potential.gamma)
    summary = _state_summary(run, traj, u)
    summary.update({"adjoint_norms": adj.norms(p.grid, p.tg), "lambda": lam,
                    "gradient_norm": norm_q(grad, p.grid, p.tg)})
    checks = _bound_checks(traj, False)
    checks["lambda_nonnegative"] = lam >= LAMBDA_FLOOR
    return summary, checks


def cmd_gradient_check(run, args, out):
    p = run.problem
    if p.potential.is_obstacle:
        raise ConfigError("gradient-check: needs a logarithmic potential")
    gc = run.gradient_check
    res = taylor_test(ReducedCost(p), n_pairs=gc["pairs"], seed=gc["seed"], hs=tuple(gc["hs"]))
    summary = {"taylor_orders": res["orders"], "taylor_order": res["min_order"],
               "negative_control_orders": res["negative_orders"],
               "negative_control_order": res["max_negative_order"], "hs": res["hs"]}
    checks = {"taylor_order_ok": res["min_order"] >= gc["min_order"],
              "negative_control_ok": res["max_negative_order"] < NEGATIVE_CONTROL_MAX}
    return summary, checks


def _write_history(out, hist, name="history.csv"):
    rows = np.array(hist.rows(), dtype=float).reshape(-1, 4)
    with open(os.path.join(out, name), "w") as fh:
        fh.write("iteration,cost,step,vi_residual\n")
        for it, c, s, r in rows:
            fh.write(f"{int(it)},{c:.17g},{s:.17g},{r:.17g}\n")


def cmd_optimize(run, args, out):
    p = run.problem
    if p.potential.is_obstacle:
        raise ConfigError("optimize: needs a logarithmic potential (see approx-control)")
    reduced = ReducedCost(p)
    u, hist = projected_gradient(run.control, reduced, run.optimizer)
    traj = reduced.state(u.values)
    adj = reduced.adjoint(u.values)
    write_levels(out, "u", u.values, p.grid, run.every)
    write_trajectory(out, traj, run.every)
    _write_history(out, hist)
    summary = {"cost": evaluate_cost(traj, u.values, p.objective),
               "iterations": hist.iterations, "vi_residual": hist.vi_residual[-1],
               "converged": hist.converged, "stalled": hist.stalled,
               "bang_bang_fraction": bang_bang_fraction(u),
               "lambda": lambda_pairing(traj, adj, adj.p, p.potential.gamma),
               "max_abs_phi": traj.stats["max_abs_phi"]}
    checks = {"converged": hist.converged, "phi_strictly_interior": summary["max_abs_phi"] < 1,
              "lambda_nonnegative": summary["lambda"] >= LAMBDA_FLOOR}
    if p.objective.ell > 0:
        res = projection_formula_residual(u, adj.q, p.objective.ell, p.grid, p.tg)
        summary["projection_residual"] = res
        checks["projection_formula_ok"] = res <= 10 * run.optimizer.tol
    return summary, checks


def cmd_quench_sweep(run, args, out):
    p = run.problem
    u = run.control.values
    sweep = state_quench_sweep(p, u, run.schedule, args.threads)
    pairs = gamma_pair_study(p, u, run.pairs, threads=args.threads)
    with open(os.path.join(out, "sweep.csv"), "w") as fh:
        fh.write("gamma,E_phi,E_w,max_abs_phi\n")
        for row in zip(sweep["gammas"], sweep["E_phi"], sweep["E_w"], sweep["max_abs_phi"]):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    summary = {"sweep": sweep, "pairs": pairs}
    lo, hi = QUENCH_SLOPE
    checks = {"error_monotone": sweep["monotone"],
              "slope_in_range": lo <= sweep["slope_phi"] <= hi,
              "pair_constant_stable": pairs["within_factor"],
              "phi_strictly_interior": max(sweep["max_abs_phi"]) < 1.0,
              "obstacle_subdiff_residual_ok": sweep["obstacle_subdiff_residual"] <= SUBDIFF_TOL}
    return summary, checks


def cmd_approx_control(run, args, out):
    p = run.problem
    if p.potential.is_obstacle:
        p = p.with_potential(p.potential.with_gamma(run.schedule.gammas[0]))
    controls, u_bar, report = approximate_optimal_control(
        run.control, run.schedule, p, run.optimizer, args.threads, run.rel_tol)
    write_levels(out, "ubar", u_bar.values, p.grid, run.every)
    write_levels(out, "u_final", controls[-1].values, p.grid, run.every)
    with open(os.path.join(out, "distances.csv"), "w") as fh:
        fh.write("gamma,distance,adapted_cost,cost_gap\n")
        for row in zip(report["gammas"], report["distance"], report["adapted_cost"],
                       report["cost_gap"]):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    checks = {"distance_nonincreasing": report["distance_nonincreasing"],
              "cost_gap_nonincreasing": is_nonincreasing(report["cost_gap"]),
              "cost_within_tol": report["cost_within_tol"]}
    return report, checks


COMMANDS = {
    "simulate": (cmd_simulate, "forward solve with the configured potential"),
    "simulate-obstacle": (lambda r, a, o: cmd_simulate(r, a, o, obstacle=True),
                          "forward solve with the double obstacle"),
    "adjoint": (cmd_adjoint, "state and adjoint solve with the reduced gradient"),
    "gradient-check": (cmd_gradient_check, "Taylor test of the adjoint gradient"),
    "optimize": (cmd_optimize, "projected gradient descent on the reduced cost"),
    "quench-sweep": (cmd_quench_sweep, "state convergence as gamma -> 0"),
    "approx-control": (cmd_approx_control, "adapted controls along the gamma schedule"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="deepquench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="JSON run config (or a manifest.json of a previous run)")
        sp.add_argument("--out", default="runs", help="parent directory for run output")
        sp.add_argument("--name", default=None,
                        help="run directory name (default: <command>-<timestamp>)")
        sp.add_argument("--threads", type=int, default=1,
                        help="max schedule entries solved concurrently")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = _make_run_dir(args.out, args.command, args.name)
    manifest = _manifest(run, args, _kernels.backend())
    write_json(os.path.join(out, "manifest.json"), manifest)
    fn = COMMANDS[args.command][0]
    t0 = time.perf_counter()
    try:
        summary, checks = fn(run, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, DomainError) as exc:
        info = {"error": type(exc).__name__, "message": str(exc),
                "level": getattr(exc, "level", None),
                "residual": getattr(exc, "residual", None),
                "diagnostics": getattr(exc, "diagnostics", {})}
        write_json(os.path.join(out, "error.json"), info)
        print(f"solver error: {exc} (details in {out}/error.json)", file=sys.stderr)
        return EXIT_SOLVER
    manifest["elapsed_seconds"] = time.perf_counter() - t0
    write_json(os.path.join(out, "manifest.json"), manifest)

    checks = {k: bool(v) for k, v in checks.items()}
    summary = dict(summary, checks=checks, passed=all(checks.values()))
    write_json(os.path.join(out, "summary.json"), summary)
    print(out)
    failed = [k for k, v in checks.items() if not v]
    if failed:
        print(f"invariant checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
