"""Forward solver for the phase-field / thermal-displacement system.

Each implicit Euler step first advances the phase field with the temperature
lagged at the previous level, then solves the linear thermal pair using the
fresh phase increment.  The control slice driving the step from level k to
k+1 is ``u[k]``, which matches the left-rectangle time quadrature used for
every space-time integral in the package.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import SolverError
from .geometry import (WeightedSystem, inner_product_l2, laplacian_neumann,
                       norm_h1_l2, norm_l2, norm_linf_h1, norm_linf_l2, solve_weighted)
from .potentials import f1gamma_first, f1gamma_second, subdiff_residual

# inactive nodes may land this far outside [-1, 1] through rounding alone
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 1.0
    beta: float = 1.0
    theta_c: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "theta_c"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive number, got {val!r}")

    @property
    def c1(self):
        return 2.0 / self.theta_c

    @property
    def c2(self):
        return 1.0 / self.theta_c ** 2


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 60
    interior_margin: float = 1e-14
    pdas_c: float = 1.0
    pdas_tol: float = 1e-10
    max_pdas_iter: int = 100
    linear_rtol: float = 1e-10


@dataclass
class InitialData:
    phi0: np.ndarray
    w0: np.ndarray
    v0: np.ndarray

    def validate(self, grid):
        """Check the data live on ``grid`` and that ``phi0`` is strictly inside
        (-1, 1).  Returns the observed ``(r_lo, r_hi)``."""
        for name in ("phi0", "w0", "v0"):
            arr = grid.check(getattr(self, name), name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite values")
            setattr(self, name, arr)
        lo, hi = float(self.phi0.min()), float(self.phi0.max())
        if lo <= -1.0 or hi >= 1.0:
            raise ValueError(
                f"(A3) phi0 must satisfy -1 < r_lo <= phi0 <= r_hi < 1; got range [{lo}, {hi}]")
        return lo, hi


@dataclass
class StateTrajectory:
    phi: np.ndarray
    w: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    grid: object
    tg: object
    potential: object
    params: ModelParams
    stats: dict = field(default_factory=dict)

    @property
    def phi_dot(self):
        """Backward difference quotients of phi (level 0 repeats level 1)."""
        d = np.empty_like(self.phi)
        d[1:] = np.diff(self.phi, axis=0) / self.tg.dt
        d[0] = d[1]
        return d

    def norms(self):
        g, tg = self.grid, self.tg
        return {
            "phi_linf_l2": norm_linf_l2(self.phi, g),
            "phi_h1_l2": norm_h1_l2(self.phi, g, tg),
            "phi_linf_h1": norm_linf_h1(self.phi, g),
            "w_linf_h1": norm_linf_h1(self.w, g),
            "w_h1_l2": norm_h1_l2(self.w, g, tg),
            "v_linf_l2": norm_linf_l2(self.v, g),
            "v_linf_h1": norm_linf_h1(self.v, g),
        }

    def conservation_defect(self, u):
        """Largest per-step defect of ``d/dt ∫v = ∫(u - F2'(phi) phi_t)``."""
        g, dt = self.grid, self.tg.dt
        worst = 0.0
        for k in range(self.tg.steps):
            lhs = np.dot(g.weights, self.v[k + 1] - self.v[k]) / dt
            f2p = self.potential.f2_first(self.phi[k + 1])
            rhs = np.dot(g.weights, u[k] - f2p * (self.phi[k + 1] - self.phi[k]) / dt)
            worst = max(worst, abs(lhs - rhs))
        return worst


def _phase_coefficient(phi, v_lag, spec, mp):
    # derivative of the smooth drift (c1 - c2 v) F2'(phi) with respect to phi
    return (mp.c1 - mp.c2 * v_lag) * spec.f2_second(phi)


def _phase_residual(phi, phi_prev, v_lag, spec, mp, dt, grid):
    r = (phi - phi_prev) / dt - laplacian_neumann(phi, grid)
    r += (mp.c1 - mp.c2 * v_lag) * spec.f2_first(phi)
    if not spec.is_obstacle:
        r += f1gamma_first(phi, spec.gamma)
    return r


def step_phase(phi_prev, v_new, spec, mp, dt, grid, opts=SolverOptions()):
    """Implicit phase step with the logarithmic potential.

    ``v_new`` is the temperature entering the coupling term.  Newton iterates
    are damped by bisection so they never leave (-1, 1).  Returns
    ``(phi_new, xi_new)`` with ``xi_new = F1γ'(phi_new)``.
    """
    if spec.is_obstacle:
        raise ValueError("step_phase handles the logarithmic family; use step_phase_obstacle")
    bound = 1.0 - opts.interior_margin
    phi = np.array(phi_prev, dtype=float)
    if np.max(np.abs(phi)) >= bound:
        raise SolverError("previous phase field is not strictly interior")
    res = _phase_residual(phi, phi_prev, v_new, spec, mp, dt, grid)
    rnorm = norm_l2(res, grid)
    polished = False
    for _ in range(opts.max_iter):
        if polished or rnorm == 0.0:
            break
        diag = 1.0 / dt + f1gamma_second(phi, spec.gamma) + _phase_coefficient(phi, v_new, spec, mp)
        if diag.min() <= 0.0:
            raise SolverError(
                "phase Jacobian lost positivity; reduce dt",
                residual=rnorm, diagnostics={"min_diagonal": float(diag.min())})
        step = solve_weighted(grid, diag, 1.0, -grid.weights * res)
        converged = rnorm <= opts.newton_tol
        tau = 1.0
        for _ in range(opts.max_halvings):
            trial = phi + tau * step
            if np.max(np.abs(trial)) < bound:
                trial_res = _phase_residual(trial, phi_prev, v_new, spec, mp, dt, grid)
                trial_norm = norm_l2(trial_res, grid)
                if trial_norm <= (1.0 - 1e-4 * tau) * rnorm or (converged and trial_norm <= rnorm):
                    break
            tau *= 0.5
        else:
            if converged:
                break
            raise SolverError("damped Newton could not reduce the phase residual",
                              residual=rnorm)
        phi, res, rnorm = trial, trial_res, trial_norm
        # one extra step after reaching the tolerance pushes the root to round-off
        polished = converged
    if rnorm > opts.newton_tol:
        gap = 1.0 - float(np.abs(phi).max())
        hint = ""
        if gap < 1e-10:
            hint = ("; iterates are pinned against the barrier, so the root is likely "
                    "closer to +-1 than double precision resolves")
        raise SolverError(f"Newton did not converge in {opts.max_iter} iterations{hint}",
                          residual=rnorm, diagnostics={"distance_to_barrier": gap})
    return phi, f1gamma_first(phi, spec.gamma)


def step_phase_obstacle(phi_prev, v_new, xi_prev, spec, mp, dt, grid, opts=SolverOptions()):
    """Implicit phase step for the double obstacle by a primal-dual active set
    (semismooth Newton) iteration.  Returns ``(phi_new, xi_new)`` with
    ``phi_new`` exactly ±1 on the contact set."""
    n = grid.n_nodes
    m = grid.weights
    phi = np.clip(phi_prev, -1.0, 1.0)
    xi = np.array(xi_prev, dtype=float)
    stiff = grid.stiffness
    # the active-set rule compares xi with c (phi -+ 1); c must match the scale
    # of the operator or nodes jump between the two contact sets
    scale = (1.0 / dt + np.abs(_phase_coefficient(phi, v_new, spec, mp))
             + stiff.diagonal() / m).max()
    c = opts.pdas_c * scale
    for it in range(opts.max_pdas_iter):
        upper = xi + c * (phi - 1.0) > 0.0
        lower = xi + c * (phi + 1.0) < 0.0
        active = upper | lower
        inactive = ~active
        r = _phase_residual(phi, phi_prev, v_new, spec, mp, dt, grid)
        diag = 1.0 / dt + _phase_coefficient(phi, v_new, spec, mp)
        jac = sparse.csr_matrix(sparse.diags(m * diag) + stiff)
        delta = np.zeros(n)
        delta[upper] = 1.0 - phi[upper]
        delta[lower] = -1.0 - phi[lower]
        rhs = -m * r - jac @ delta
        if inactive.any():
            idx = np.flatnonzero(inactive)
            sub = jac[idx][:, idx]
            delta[idx] = np.atleast_1d(spsolve(sub.tocsc(), rhs[idx]))
        phi = phi + delta
        phi[upper] = 1.0
        phi[lower] = -1.0
        xi = np.zeros(n)
        xi[active] = -(m * r + jac @ delta)[active] / m[active]
        # stop on the optimality system itself, not on a settled active set:
        # a node touching the obstacle with a zero multiplier can flip sets forever
        overshoot = np.abs(phi).max() - 1.0
        if overshoot <= ROUNDOFF:
            phi = np.clip(phi, -1.0, 1.0)
        full = _phase_residual(phi, phi_prev, v_new, spec, mp, dt, grid) + xi
        rnorm = norm_l2(full, grid)
        if (overshoot <= ROUNDOFF and rnorm <= opts.pdas_tol * max(1.0, norm_l2(xi, grid))
                and subdiff_residual(phi, xi) <= opts.pdas_tol):
            break
    else:
        raise SolverError(f"active set still changing after {opts.max_pdas_iter} iterations",
                          diagnostics={"active_nodes": int(active.sum())})
    return phi, xi


def thermal_system(mp, dt, grid):
    """Factorised matrix of the thermal step, ``M + dt (alpha + dt beta) K``."""
    return WeightedSystem(grid, 1.0, dt * (mp.alpha + dt * mp.beta))


def step_thermal(w_prev, v_prev, phi_new, phi_prev, u_slice, mp, dt, grid, spec, system=None,
                 rtol=SolverOptions.linear_rtol):
    """Implicit step of the thermal pair; returns ``(w_new, v_new)``."""
    if system is None:
        system = thermal_system(mp, dt, grid)
    m = grid.weights
    f2p = spec.f2_first(phi_new)
    rhs = m * (v_prev - f2p * (phi_new - phi_prev) + dt * u_slice)
    rhs -= dt * mp.beta * (grid.stiffness @ w_prev)
    v_new = system.solve(rhs)
    resid = m * v_new + dt * (mp.alpha + dt * mp.beta) * (grid.stiffness @ v_new) - rhs
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    if np.linalg.norm(resid) > rtol * scale:
        raise SolverError("thermal solve residual above tolerance",
                          residual=float(np.linalg.norm(resid) / scale))
    return w_prev + dt * v_new, v_new


def _allocate(init, tg, grid):
    shape = (tg.steps + 1, grid.n_nodes)
    phi, w, v, xi = (np.empty(shape) for _ in range(4))
    phi[0], w[0], v[0] = init.phi0, init.w0, init.v0
    return phi, w, v, xi


def solve_state(u, init, spec, mp, tg, grid, opts=SolverOptions()):
    """Forward solve with the logarithmic potential ``gamma * F1log``."""
    u = tg.check(u, grid, "control")
    init.validate(grid)
    dt = tg.dt
    phi, w, v, xi = _allocate(init, tg, grid)
    xi[0] = f1gamma_first(phi[0], spec.gamma)
    system = thermal_system(mp, dt, grid)
    for k in range(tg.steps):
        try:
            phi[k + 1], xi[k + 1] = step_phase(phi[k], v[k], spec, mp, dt, grid, opts)
            w[k + 1], v[k + 1] = step_thermal(w[k], v[k], phi[k + 1], phi[k], u[k], mp, dt,
                                              grid, spec, system, opts.linear_rtol)
        except SolverError as exc:
            raise exc.at_level(k + 1) from exc
    stats = {"phi_min": float(phi.min()), "phi_max": float(phi.max()),
             "max_abs_phi": float(np.abs(phi).max())}
    return StateTrajectory(phi, w, v, xi, grid, tg, spec, mp, stats)


def solve_state_obstacle(u, init, mp, tg, grid, opts=SolverOptions(), spec=None):
    """Forward solve with the double obstacle; ``spec`` supplies ``F2``."""
    from .potentials import PotentialSpec

    spec = PotentialSpec("obstacle") if spec is None else spec.as_obstacle()
    u = tg.check(u, grid, "control")
    init.validate(grid)
    dt = tg.dt
    phi, w, v, xi = _allocate(init, tg, grid)
    xi[0] = 0.0
    system = thermal_system(mp, dt, grid)
    worst = 0.0
    for k in range(tg.steps):
        try:
            phi[k + 1], xi[k + 1] = step_phase_obstacle(phi[k], v[k], xi[k], spec, mp, dt, grid, opts)
            w[k + 1], v[k + 1] = step_thermal(w[k], v[k], phi[k + 1], phi[k], u[k], mp, dt,
                                              grid, spec, system, opts.linear_rtol)
        except SolverError as exc:
            raise exc.at_level(k + 1) from exc
        worst = max(worst, subdiff_residual(phi[k + 1], xi[k + 1]))
    contact = np.abs(np.abs(phi) - 1.0) <= 1e-9
    stats = {"phi_min": float(phi.min()), "phi_max": float(phi.max()),
             "max_abs_phi": float(np.abs(phi).max()),
             "subdiff_residual": worst, "contact_fraction": float(contact.mean())}
    return StateTrajectory(phi, w, v, xi, grid, tg, spec, mp, stats)


def mean_value(field, grid):
    return inner_product_l2(field, np.ones(grid.n_nodes), grid) / grid.measure
