"""Projected gradient descent with Armijo backtracking over a box."""

from dataclasses import dataclass, field

import numpy as np

from .geometry import norm_q
from .objective import ControlField
from .problem import ReducedCost


@dataclass(frozen=True)
class OptimizerOptions:
    s0: float = 1.0
    armijo_c: float = 1e-4
    shrink: float = 0.5
    tol: float = 1e-6
    max_iter: int = 200
    min_step: float = 1e-10


@dataclass
class History:
    cost: list = field(default_factory=list)
    step: list = field(default_factory=list)
    vi_residual: list = field(default_factory=list)
    stalled: bool = False
    converged: bool = False

    @property
    def iterations(self):
        return len(self.step)

    def rows(self):
        """(iteration, cost, step, vi_residual); the step of row 0 is 0."""
        steps = [0.0] + self.step
        return [(i, c, s, r) for i, (c, s, r) in
                enumerate(zip(self.cost, steps, self.vi_residual))]


def project_admissible(u_raw, bounds):
    """Nodewise clamp onto the box of ``bounds`` (a :class:`ControlField`)."""
    vals = np.clip(np.asarray(u_raw, dtype=float), bounds.lower, bounds.upper)
    return bounds.with_values(vals)


def vi_residual(u, g, s, grid, tg):
    """``||u - P(u - s g)||`` in L2(Q); zero exactly at stationary points."""
    proj = np.clip(u.values - s * g, u.lower, u.upper)
    return norm_q(u.values - proj, grid, tg)


def projected_gradient(u0, reduced, opts=OptimizerOptions()):
    """Minimise ``reduced`` (a :class:`ReducedCost`) over the box of ``u0``.

    Returns ``(u_opt, history)``.  On an Armijo failure the best iterate is
    returned with ``history.stalled`` set.
    """
    grid, tg = reduced.problem.grid, reduced.problem.tg
    if not u0.is_admissible():
        raise ValueError("initial control is not admissible")
    u = u0
    hist = History()
    cost = reduced.value(u.values)
    g = reduced.gradient(u.values)
    res = vi_residual(u, g, opts.s0, grid, tg)
    hist.cost.append(cost)
    hist.vi_residual.append(res)
    for _ in range(opts.max_iter):
        if res <= opts.tol:
            hist.converged = True
            break
        s = opts.s0
        while s >= opts.min_step:
            trial = project_admissible(u.values - s * g, u)
            dist = norm_q(trial.values - u.values, grid, tg)
            trial_cost = reduced.value(trial.values)
            if trial_cost <= cost - opts.armijo_c / s * dist ** 2:
                break
            s *= opts.shrink
        else:
            hist.stalled = True
            break
        u, cost = trial, trial_cost
        g = reduced.gradient(u.values)
        res = vi_residual(u, g, opts.s0, grid, tg)
        hist.cost.append(cost)
        hist.step.append(s)
        hist.vi_residual.append(res)
    else:
        hist.converged = res <= opts.tol
    return u, hist


def solve_adapted_problem(gamma, u_bar, problem, opts=OptimizerOptions(), u0=None):
    """Minimise ``J + ½||u - u_bar||²`` for the logarithmic potential with
    parameter ``gamma``.  Starts from ``u_bar`` unless ``u0`` is given."""
    pg = problem.with_potential(problem.potential.with_gamma(gamma))
    reduced = ReducedCost(pg, adapted_to=u_bar)
    start = u0 if u0 is not None else ControlField(u_bar.values, problem.lower, problem.upper)
    return projected_gradient(start, reduced, opts)


def projection_formula_residual(u, q, ell, grid, tg):
    """``||u - clamp(-q/ell, lower, upper)||`` in L2(Q) (needs ``ell > 0``)."""
    target = np.clip(-q / ell, u.lower, u.upper)
    return norm_q(u.values - target, grid, tg)


def bang_bang_fraction(u, atol=1e-12):
    at = (np.abs(u.values - u.lower) <= atol) | (np.abs(u.values - u.upper) <= atol)
    return float(at[:-1].mean())
