"""Deep-quench continuation: state convergence as gamma -> 0 and
approximation of obstacle-problem controls by adapted logarithmic problems."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .geometry import convolve_forward, norm_h1_l2, norm_linf_h1, norm_linf_l2, norm_q
from .objective import ControlField, evaluate_adapted_cost, evaluate_cost
from .optimizer import OptimizerOptions, projected_gradient, solve_adapted_problem
from .problem import ReducedCost

DEFAULT_GAMMAS = (1e-1, 3.16e-2, 1e-2, 3.16e-3, 1e-3)


@dataclass(frozen=True)
class QuenchSchedule:
    gammas: tuple = DEFAULT_GAMMAS
    warm_start: bool = False

    def __post_init__(self):
        gs = tuple(float(g) for g in self.gammas)
        object.__setattr__(self, "gammas", gs)
        if not gs:
            raise ValueError("schedule needs at least one gamma")
        if any(not 0.0 < g <= 1.0 for g in gs):
            raise ValueError("schedule gammas must lie in (0, 1]")
        if any(b >= a for a, b in zip(gs, gs[1:])):
            raise ValueError("schedule gammas must be strictly decreasing")


def loglog_slope(x, y):
    """Least-squares slope of log y against log x (nonpositive y are dropped)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def is_nonincreasing(seq, rtol=1e-12):
    seq = list(seq)
    return all(b <= a * (1 + rtol) + 1e-300 for a, b in zip(seq, seq[1:]))


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def state_difference(a, b):
    """Phase difference in L∞(L2) and thermal difference in H1(L2) ∩ L∞(H1)."""
    g, tg = a.grid, a.tg
    dphi = a.phi - b.phi
    dw = a.w - b.w
    return norm_linf_l2(dphi, g), norm_h1_l2(dw, g, tg) + norm_linf_h1(dw, g)


def state_quench_sweep(problem, u, schedule, threads=1):
    """Distance of the gamma-states to the obstacle state along ``schedule``."""
    uv = getattr(u, "values", u)
    reference = problem.with_potential(problem.potential.as_obstacle()).solve(uv)

    def run(gamma):
        traj = problem.with_potential(problem.potential.with_gamma(gamma)).solve(uv)
        return traj, state_difference(traj, reference)

    results = _map(run, list(schedule.gammas), threads)
    e_phi = [r[1][0] for r in results]
    e_w = [r[1][1] for r in results]
    return {
        "gammas": list(schedule.gammas),
        "E_phi": e_phi,
        "E_w": e_w,
        "slope_phi": loglog_slope(schedule.gammas, e_phi),
        "slope_w": loglog_slope(schedule.gammas, e_w),
        "monotone": is_nonincreasing(e_phi),
        "max_abs_phi": [float(np.abs(r[0].phi).max()) for r in results],
        "obstacle_contact_fraction": reference.stats.get("contact_fraction", 0.0),
        "obstacle_subdiff_residual": reference.stats.get("subdiff_residual", 0.0),
    }


def pairwise_gamma_estimate(problem, u1, u2, gamma1, gamma2):
    """Both sides of the continuous-dependence estimate for one pair."""
    if gamma1 > gamma2:
        raise ValueError("need gamma1 <= gamma2")
    v1 = np.asarray(getattr(u1, "values", u1), dtype=float)
    v2 = np.asarray(getattr(u2, "values", u2), dtype=float)
    t1 = problem.with_potential(problem.potential.with_gamma(gamma1)).solve(v1)
    t2 = t1 if (gamma1 == gamma2 and np.array_equal(v1, v2)) else \
        problem.with_potential(problem.potential.with_gamma(gamma2)).solve(v2)
    lhs_phi, lhs_w = state_difference(t1, t2)
    ctrl = norm_q(convolve_forward(v1 - v2, problem.tg), problem.grid, problem.tg)
    return {"gamma1": gamma1, "gamma2": gamma2, "lhs_phi": lhs_phi, "lhs_w": lhs_w,
            "sqrt_gap": float(np.sqrt(gamma2 - gamma1)), "control_term": ctrl}


def gamma_pair_study(problem, u, pairs, factor=3.0, threads=1):
    """Calibrate the constant of the estimate on the first pair and check the
    later pairs stay within ``factor`` of it."""
    reports = _map(lambda pr: pairwise_gamma_estimate(problem, u, u, *pr), list(pairs), threads)
    consts = []
    for r in reports:
        rhs = r["sqrt_gap"] + r["control_term"]
        consts.append(r["lhs_phi"] / rhs if rhs > 0 else 0.0)
    c0 = consts[0]
    gaps = [r["gamma2"] - r["gamma1"] for r in reports]
    return {
        "pairs": reports,
        "constants": consts,
        "calibrated": c0,
        "within_factor": all(c <= factor * c0 for c in consts),
        "spread": max(consts) / min(consts) if min(consts) > 0 else float("inf"),
        "gap_slope": loglog_slope(gaps, [r["lhs_phi"] for r in reports]),
    }


def obstacle_stationary_control(problem, u0, gamma_surrogate, opts=OptimizerOptions()):
    """Stationary point of the obstacle problem, with the gradient borrowed from
    the adjoint of the ``gamma_surrogate`` problem."""
    obst = problem.with_potential(problem.potential.as_obstacle())
    surrogate = problem.with_potential(problem.potential.with_gamma(gamma_surrogate))
    reduced = ReducedCost(obst, gradient_problem=surrogate)
    return projected_gradient(u0, reduced, opts)


def approximate_optimal_control(u_bar_guess, schedule, problem, opts=OptimizerOptions(),
                                threads=1, rel_tol=0.01):
    """Solve the adapted problems along ``schedule`` anchored at an obstacle
    stationary point ``u_bar``; returns ``(controls, report)``."""
    u_bar, bar_hist = obstacle_stationary_control(problem, u_bar_guess, schedule.gammas[-1], opts)
    obst = problem.with_potential(problem.potential.as_obstacle())
    j_bar = evaluate_cost(obst.solve(u_bar.values), u_bar.values, problem.objective)

    def run(gamma, start=None):
        u_g, hist = solve_adapted_problem(gamma, u_bar, problem, opts, u0=start)
        if hist.stalled:
            raise SolverError(f"adapted optimizer stalled at gamma={gamma}",
                              diagnostics={"gamma": gamma, "vi_residual": hist.vi_residual[-1]})
        return u_g, hist

    if schedule.warm_start:
        results, start = [], None
        for gamma in schedule.gammas:
            results.append(run(gamma, start))
            start = results[-1][0]
    else:
        results = _map(run, list(schedule.gammas), threads)

    grid, tg = problem.grid, problem.tg
    dist, j_tilde = [], []
    for gamma, (u_g, _) in zip(schedule.gammas, results):
        pg = problem.with_potential(problem.potential.with_gamma(gamma))
        traj = pg.solve(u_g.values)
        dist.append(norm_q(u_g.values - u_bar.values, grid, tg))
        j_tilde.append(evaluate_adapted_cost(traj, u_g.values, problem.objective, u_bar.values))
    gaps = [abs(j - j_bar) for j in j_tilde]
    rel_gap = gaps[-1] / max(j_bar, 1e-12)
    report = {
        "gammas": list(schedule.gammas),
        "distance": dist,
        "adapted_cost": j_tilde,
        "cost_gap": gaps,
        "J_bar": j_bar,
        "relative_cost_gap": rel_gap,
        "distance_nonincreasing": is_nonincreasing(dist),
        "cost_gap_nonincreasing": is_nonincreasing(gaps),
        "cost_within_tol": rel_gap <= rel_tol,
        "u_bar_iterations": bar_hist.iterations,
        "u_bar_vi_residual": bar_hist.vi_residual[-1],
        "u_bar_stalled": bar_hist.stalled,
        "iterations": [h.iterations for _, h in results],
        "final_vi_residual": [h.vi_residual[-1] for _, h in results],
    }
    return [r[0] for r in results], u_bar, report
