"""Tracking cost, its adapted variant and the reduced gradient.

Space-time integrals use trapezoid weights in space and the left-rectangle
rule in time (see :func:`deepquench.geometry.inner_product_q`).  The control
penalty is ``(ell/2) ||u||^2`` so that the reduced gradient is ``q + ell u``.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import inner_product_l2, inner_product_q, norm_h1


@dataclass
class ControlField:
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = self.values.shape
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), shape).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), shape).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("(A6) control bounds need lower <= upper everywhere")

    def is_admissible(self):
        return bool(np.all(self.values >= self.lower) and np.all(self.values <= self.upper))

    def with_values(self, values):
        return ControlField(values, self.lower, self.upper)


@dataclass
class ObjectiveSpec:
    """Weights and targets.  Space-time targets have shape ``(N+1, n)``,
    terminal targets shape ``(n,)``; ``None`` means zero."""

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    k5: float = 0.0
    k6: float = 0.0
    ell: float = 0.0
    phi_Q: np.ndarray = None
    w_Q: np.ndarray = None
    wp_Q: np.ndarray = None
    phi_Omega: np.ndarray = None
    w_Omega: np.ndarray = None
    wp_Omega: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def weights(self):
        return (self.k1, self.k2, self.k3, self.k4, self.k5, self.k6, self.ell)

    def resolve(self, grid, tg):
        """Fill missing targets with zeros and check shapes and assumptions."""
        ws = self.weights
        if any(w < 0 for w in ws):
            raise ValueError("(A4) cost weights must be nonnegative")
        if not any(w > 0 for w in ws):
            raise ValueError("(A4) cost weights must not all vanish")
        for name in ("phi_Q", "w_Q", "wp_Q"):
            val = getattr(self, name)
            val = np.zeros((tg.steps + 1, grid.n_nodes)) if val is None else tg.check(val, grid, name)
            setattr(self, name, val)
        for name in ("phi_Omega", "w_Omega", "wp_Omega"):
            val = getattr(self, name)
            val = np.zeros(grid.n_nodes) if val is None else grid.check(val, name)
            setattr(self, name, val)
        if self.k6 > 0 and not np.isfinite(norm_h1(self.wp_Omega, grid)):
            raise ValueError("(A7) k6 > 0 needs an H1 target wp_Omega")
        return self


def _control_values(u):
    return u.values if isinstance(u, ControlField) else np.asarray(u, dtype=float)


def cost_terms(traj, u, spec):
    """The seven contributions to the cost, in weight order."""
    g, tg = traj.grid, traj.tg
    uv = _control_values(u)

    def q2(a):
        return inner_product_q(a, a, g, tg)

    def o2(a):
        return inner_product_l2(a, a, g)

    return (
        0.5 * spec.k1 * q2(traj.phi - spec.phi_Q),
        0.5 * spec.k2 * o2(traj.phi[-1] - spec.phi_Omega),
        0.5 * spec.k3 * q2(traj.w - spec.w_Q),
        0.5 * spec.k4 * o2(traj.w[-1] - spec.w_Omega),
        0.5 * spec.k5 * q2(traj.v - spec.wp_Q),
        0.5 * spec.k6 * o2(traj.v[-1] - spec.wp_Omega),
        0.5 * spec.ell * q2(uv),
    )


def evaluate_cost(traj, u, spec):
    return float(sum(cost_terms(traj, u, spec)))


def evaluate_adapted_cost(traj, u, spec, u_bar):
    d = _control_values(u) - _control_values(u_bar)
    return evaluate_cost(traj, u, spec) + 0.5 * inner_product_q(d, d, traj.grid, traj.tg)


def reduced_gradient(adj, u, spec, adapted_to=None):
    """Nodewise ``q + ell u`` (plus ``u - u_bar`` for the adapted cost)."""
    uv = _control_values(u)
    g = adj.q + spec.ell * uv
    if adapted_to is not None:
        g = g + (uv - _control_values(adapted_to))
    return g
