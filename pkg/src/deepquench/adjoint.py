"""Backward sweep for the adjoint pair (p, q) of the logarithmic problem.

The sweep is the exact transpose of the forward scheme in
:mod:`deepquench.state`, so the reduced gradient ``q + ell u`` is the true
derivative of the discrete cost.  Adjoint level ``j`` is solved with the state
coefficients of level ``j + 1``; level ``N`` holds the terminal data.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import SolverError
from .geometry import (convolve_backward, norm_h1_l2, norm_l2_h1, norm_linf_h1,
                       norm_linf_l2, solve_weighted)
from .potentials import f1gamma_second
from .state import thermal_system


@dataclass
class AdjointTrajectory:
    p: np.ndarray
    q: np.ndarray
    tail: np.ndarray
    gamma: float
    stats: dict = field(default_factory=dict)

    def norms(self, grid, tg):
        return {
            "p_linf_l2": norm_linf_l2(self.p, grid),
            "p_l2_h1": norm_l2_h1(self.p, grid, tg),
            "q_h1_l2": norm_h1_l2(self.q, grid, tg),
            "q_linf_h1": norm_linf_h1(self.q, grid),
        }


class AdjointSlice(NamedTuple):
    """State data entering one backward step."""

    phi: np.ndarray        # phi at the level being solved for
    phi_prev: np.ndarray   # one level earlier
    v_prev: np.ndarray     # temperature lagged into that phase step
    phi_next: np.ndarray   # one level later (the final level repeats itself)
    source: np.ndarray     # q-equation source at this level
    track: np.ndarray      # k1 (phi - phi_Q), zero on the final level
    coupled: bool          # whether a later phase step used this temperature


def assemble_source(traj, spec, tg, grid):
    """``k3 (1 ⊛ (w - w_Q)) + k5 (v - w'_Q) + k4 (w(T) - w_Omega)`` per level."""
    src = spec.k3 * convolve_backward(traj.w - spec.w_Q, tg)
    src += spec.k5 * (traj.v - spec.wp_Q)
    src += spec.k4 * (traj.w[-1] - spec.w_Omega)[None, :]
    return src


def terminal_values(traj, spec):
    """``(p(T), q(T))``."""
    f2p = traj.potential.f2_first(traj.phi[-1])
    dv = traj.v[-1] - spec.wp_Omega
    q_T = spec.k6 * dv
    p_T = spec.k2 * (traj.phi[-1] - spec.phi_Omega) - spec.k6 * f2p * dv
    return p_T, q_T


def zeroth_order_coefficient(phi, v_prev, potential, mp):
    """``F1γ''(phi) + (2/θc) F2''(phi) - (1/θc²) v F2''(phi)``."""
    return (f1gamma_second(phi, potential.gamma)
            + (mp.c1 - mp.c2 * v_prev) * potential.f2_second(phi))


def step_adjoint_backward(p_next, q_next, tail_next, sl, potential, mp, dt, grid, system=None):
    """One backward step: q first, then the tail, then p."""
    m = grid.weights
    if system is None:
        system = thermal_system(mp, dt, grid)
    rhs = m * (q_next + dt * sl.source)
    rhs -= dt * mp.beta * (grid.stiffness @ tail_next)
    if sl.coupled:
        rhs += dt * mp.c2 * m * potential.f2_first(sl.phi_next) * p_next
    q = system.solve(rhs)
    tail = tail_next + dt * q

    coef = zeroth_order_coefficient(sl.phi, sl.v_prev, potential, mp)
    diag = 1.0 + dt * coef
    if diag.min() <= 0.0:
        raise SolverError("adjoint p-operator is not positive definite; reduce dt",
                          diagnostics={"min_diagonal": float(diag.min())})
    g_here = potential.f2_first(sl.phi)
    h_here = potential.f2_second(sl.phi)
    rhs_p = (p_next + potential.f2_first(sl.phi_next) * q_next
             - (g_here + h_here * (sl.phi - sl.phi_prev)) * q
             + dt * sl.track)
    p = solve_weighted(grid, diag, dt, m * rhs_p)
    return p, q, tail


def max_stable_dt(potential, mp, v_max):
    """Largest dt keeping the adjoint p-operator (and the Newton Jacobian)
    positive definite, from ``1 + dt * min coefficient > 0``.

    With the default ``F2 = k(1 - r^2)`` this reads
    ``dt < θc² / (2k (2θc + |v|_max))``."""
    lip = potential.f2_lipschitz()
    worst = lip * (mp.c1 + mp.c2 * v_max)
    return np.inf if worst == 0 else 1.0 / worst


def solve_adjoint(traj, spec, mp, tg, grid):
    """Full backward sweep for a logarithmic-case state trajectory."""
    potential = traj.potential
    if potential.is_obstacle:
        raise ValueError("the adjoint is only defined for the logarithmic family")
    n_lev = tg.steps + 1
    N = tg.steps
    dt = tg.dt
    p = np.empty((n_lev, grid.n_nodes))
    q = np.empty_like(p)
    tail = np.zeros_like(p)
    p[N], q[N] = terminal_values(traj, spec)
    src = assemble_source(traj, spec, tg, grid)
    # running terms carry no quadrature weight on the final level
    src_final = src[N] - spec.k5 * (traj.v[N] - spec.wp_Q[N])
    system = thermal_system(mp, dt, grid)
    phi, v = traj.phi, traj.v
    for j in range(N - 1, -1, -1):
        k = j + 1
        last = k == N
        sl = AdjointSlice(
            phi=phi[k], phi_prev=phi[k - 1], v_prev=v[k - 1],
            phi_next=phi[N] if last else phi[k + 1],
            source=src_final if last else src[k],
            track=np.zeros(grid.n_nodes) if last else spec.k1 * (phi[k] - spec.phi_Q[k]),
            coupled=not last,
        )
        try:
            p[j], q[j], tail[j] = step_adjoint_backward(
                p[j + 1], q[j + 1], tail[j + 1], sl, potential, mp, dt, grid, system)
        except SolverError as exc:
            raise exc.at_level(j) from exc
    return AdjointTrajectory(p, q, tail, potential.gamma)


def lambda_pairing(traj, adj, test, gamma):
    """Quadrature of ``F1γ''(phi) p test`` over the space-time cylinder.

    Each adjoint level is paired with the state level whose coefficient it was
    solved with."""
    g, tg = traj.grid, traj.tg
    test = tg.check(test, g, "test")
    N = tg.steps
    weight = f1gamma_second(traj.phi[1:], gamma)
    integrand = weight * adj.p[:N] * test[:N]
    return float(tg.dt * (integrand @ g.weights).sum())
