"""Independent correctness oracles: finite differences, Taylor tests, a scalar
ODE reference and brute-force quadrature of the cost."""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .geometry import inner_product_q, norm_q

DEFAULT_HS = (1e-2, 1e-3, 1e-4, 1e-5)


def fd_directional_derivative(u, direction, h, reduced):
    """Central difference ``(J(u + h d) - J(u - h d)) / 2h``."""
    u = np.asarray(getattr(u, "values", u), dtype=float)
    d = np.asarray(direction, dtype=float)
    if not np.any(d):
        return 0.0
    return (reduced.value(u + h * d) - reduced.value(u - h * d)) / (2.0 * h)


def taylor_remainders(u, direction, hs, reduced, gradient=None):
    u = np.asarray(getattr(u, "values", u), dtype=float)
    g = reduced.gradient(u) if gradient is None else gradient
    prob = reduced.problem
    dj = inner_product_q(g, direction, prob.grid, prob.tg)
    j0 = reduced.value(u)
    return np.array([abs(reduced.value(u + h * direction) - j0 - h * dj) for h in hs])


def taylor_order(u, direction, hs, reduced, gradient=None):
    """Observed order of the first-order Taylor remainder; ``nan`` for a zero
    direction."""
    if not np.any(direction):
        return float("nan"), np.zeros(len(hs))
    rem = taylor_remainders(u, direction, hs, reduced, gradient)
    keep = rem > 0
    if keep.sum() < 2:
        return float("inf"), rem
    order = np.polyfit(np.log(np.asarray(hs)[keep]), np.log(rem[keep]), 1)[0]
    return float(order), rem


def perturbed_gradient(g, direction, grid, tg, rel=0.01):
    """Gradient shifted by ``rel * ||g||`` along the probing direction."""
    return g + rel * norm_q(g, grid, tg) * direction / norm_q(direction, grid, tg)


def taylor_test(reduced, n_pairs=5, seed=0, hs=DEFAULT_HS, u_scale=0.5, negative_control=True):
    """Taylor orders on ``n_pairs`` random (u, d) pairs.

    Controls are drawn uniformly inside the box (or ``u_scale`` times a
    standard normal where the box is unbounded).
    """
    prob = reduced.problem
    rng = np.random.default_rng(seed)
    shape = prob.control_shape
    orders, neg_orders = [], []
    for _ in range(n_pairs):
        lo, hi = prob.lower, prob.upper
        finite = np.isfinite(lo) & np.isfinite(hi)
        u = np.where(finite, rng.uniform(np.where(finite, lo, 0), np.where(finite, hi, 1)),
                     u_scale * rng.standard_normal(shape))
        d = rng.standard_normal(shape)
        g = reduced.gradient(u)
        orders.append(taylor_order(u, d, hs, reduced, g)[0])
        if negative_control:
            gp = perturbed_gradient(g, d, prob.grid, prob.tg)
            neg_orders.append(taylor_order(u, d, hs, reduced, gp)[0])
    return {"orders": orders, "min_order": float(min(orders)),
            "negative_orders": neg_orders,
            "max_negative_order": float(max(neg_orders)) if neg_orders else float("nan"),
            "hs": list(hs)}


def scalar_ode_reference(phi0, gamma, tg, k=0.0, rtol=1e-12):
    """High-accuracy solution of ``phi' = -gamma ln((1+phi)/(1-phi))`` at the
    node times of ``tg``."""
    if k != 0.0:
        raise ValueError("the scalar reference covers F2 = 0 only")

    def rhs(_, y):
        return [-gamma * np.log((1.0 + y[0]) / (1.0 - y[0]))]

    sol = solve_ivp(rhs, (0.0, tg.horizon), [float(phi0)], method="DOP853",
                    t_eval=tg.times, rtol=rtol, atol=1e-14)
    if not sol.success:  # pragma: no cover
        raise RuntimeError(sol.message)
    return sol.y[0]


def scalar_backward_euler_step(phi_prev, gamma, dt):
    """Root of ``(x - phi_prev)/dt + gamma ln((1+x)/(1-x)) = 0`` by bracketing."""
    def f(x):
        return (x - phi_prev) / dt + gamma * np.log((1.0 + x) / (1.0 - x))

    if phi_prev == 0.0:
        return 0.0
    lo, hi = sorted((0.0, phi_prev))
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def richardson_slope(errors):
    """Observed orders ``log2(e_i / e_{i+1})`` for a sequence of halved steps."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def cost_by_summation(traj, u, spec):
    """The cost by explicit loops over nodes and levels."""
    g, tg = traj.grid, traj.tg
    n, N, dt = g.n_nodes, tg.steps, tg.dt
    ws = []
    if g.dimension == 1:
        h = g.spacing[0]
        ws = [h * (0.5 if i in (0, n - 1) else 1.0) for i in range(n)]
    else:
        nx, ny = g.cells
        hx, hy = g.spacing
        for iy in range(ny):
            for ix in range(nx):
                fx = 0.5 if ix in (0, nx - 1) else 1.0
                fy = 0.5 if iy in (0, ny - 1) else 1.0
                ws.append(hx * hy * fx * fy)
    total = 0.0
    uv = np.asarray(getattr(u, "values", u))
    for k in range(N):
        for i in range(n):
            total += 0.5 * dt * ws[i] * (
                spec.k1 * (traj.phi[k, i] - spec.phi_Q[k, i]) ** 2
                + spec.k3 * (traj.w[k, i] - spec.w_Q[k, i]) ** 2
                + spec.k5 * (traj.v[k, i] - spec.wp_Q[k, i]) ** 2
                + spec.ell * uv[k, i] ** 2)
    for i in range(n):
        total += 0.5 * ws[i] * (
            spec.k2 * (traj.phi[N, i] - spec.phi_Omega[i]) ** 2
            + spec.k4 * (traj.w[N, i] - spec.w_Omega[i]) ** 2
            + spec.k6 * (traj.v[N, i] - spec.wp_Omega[i]) ** 2)
    return total
