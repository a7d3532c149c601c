"""Problem bundle: everything needed to evaluate the reduced cost and its
gradient for a given control."""

from dataclasses import dataclass, field, replace

import numpy as np

from .adjoint import solve_adjoint
from .objective import ControlField, evaluate_adapted_cost, evaluate_cost, reduced_gradient
from .state import SolverOptions, solve_state, solve_state_obstacle


@dataclass
class Problem:
    grid: object
    tg: object
    params: object
    potential: object
    init: object
    objective: object
    lower: np.ndarray = -np.inf
    upper: np.ndarray = np.inf
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        shape = (self.tg.steps + 1, self.grid.n_nodes)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), shape).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), shape).copy()
        self.objective.resolve(self.grid, self.tg)
        self.bounds = self.init.validate(self.grid)

    @property
    def control_shape(self):
        return (self.tg.steps + 1, self.grid.n_nodes)

    def control(self, values=None):
        if values is None:
            values = np.clip(np.zeros(self.control_shape), self.lower, self.upper)
        return ControlField(values, self.lower, self.upper)

    def with_potential(self, potential):
        return replace(self, potential=potential)

    def solve(self, u):
        uv = u.values if isinstance(u, ControlField) else u
        if self.potential.is_obstacle:
            return solve_state_obstacle(uv, self.init, self.params, self.tg, self.grid,
                                        self.solver, self.potential)
        return solve_state(uv, self.init, self.potential, self.params, self.tg, self.grid,
                           self.solver)

    def adjoint(self, traj):
        return solve_adjoint(traj, self.objective, self.params, self.tg, self.grid)


class ReducedCost:
    """``u -> J(S(u), u)`` (optionally adapted) with its adjoint gradient.

    ``gradient_problem`` lets the gradient come from a different potential than
    the cost, which is how the obstacle problem borrows a small-gamma adjoint.
    """

    def __init__(self, problem, adapted_to=None, gradient_problem=None):
        self.problem = problem
        self.gradient_problem = gradient_problem or problem
        self.adapted_to = None if adapted_to is None else np.asarray(
            getattr(adapted_to, "values", adapted_to), dtype=float)
        self._cache = {}
        self.n_state_solves = 0
        self.n_adjoint_solves = 0

    def _state(self, problem, u):
        key = (id(problem), u.tobytes())
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[key] = problem.solve(u)
            self.n_state_solves += 1
        return self._cache[key]

    def value(self, u):
        u = np.asarray(u, dtype=float)
        traj = self._state(self.problem, u)
        if self.adapted_to is None:
            return evaluate_cost(traj, u, self.problem.objective)
        return evaluate_adapted_cost(traj, u, self.problem.objective, self.adapted_to)

    def gradient(self, u):
        u = np.asarray(u, dtype=float)
        gp = self.gradient_problem
        traj = self._state(gp, u)
        adj = gp.adjoint(traj)
        self.n_adjoint_solves += 1
        return reduced_gradient(adj, u, gp.objective, self.adapted_to)

    def state(self, u):
        return self._state(self.problem, np.asarray(u, dtype=float))

    def adjoint(self, u):
        gp = self.gradient_problem
        return gp.adjoint(self._state(gp, np.asarray(u, dtype=float)))
