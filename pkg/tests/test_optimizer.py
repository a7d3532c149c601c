import numpy as np
import pytest

from deepquench.geometry import GridSpec, TimeGrid
from deepquench.objective import ControlField
from deepquench.optimizer import (OptimizerOptions, bang_bang_fraction, project_admissible,
                                  projected_gradient, projection_formula_residual, vi_residual)
from deepquench.problem import ReducedCost


class Quadratic:
    """J(u) = ½ ||u - c||² on a tiny grid, for testing the optimizer alone."""

    def __init__(self, c, grid, tg):
        self.c = c

        class P:
            pass
        self.problem = P()
        self.problem.grid, self.problem.tg = grid, tg

    def value(self, u):
        from deepquench.geometry import inner_product_q
        d = u - self.c
        return 0.5 * inner_product_q(d, d, self.problem.grid, self.problem.tg)

    def gradient(self, u):
        return u - self.c


def test_projection_clamps():
    u = ControlField(np.zeros(4), -1.0, 1.0)
    out = project_admissible(np.array([-3.0, -0.5, 0.5, 2.0]), u)
    np.testing.assert_array_equal(out.values, [-1.0, -0.5, 0.5, 1.0])


def test_box_constrained_quadratic_reaches_clamped_target():
    g = GridSpec.interval(1.0, 5)
    tg = TimeGrid(1.0, 4)
    c = np.linspace(-2, 2, 25).reshape(5, 5)
    u0 = ControlField(np.zeros((5, 5)), -1.0, 1.0)
    u, hist = projected_gradient(u0, Quadratic(c, g, tg), OptimizerOptions(tol=1e-12))
    assert hist.converged and not hist.stalled
    # the last time level carries no weight, so only levels < N are determined
    np.testing.assert_allclose(u.values[:-1], np.clip(c, -1, 1)[:-1], atol=1e-12)
    assert vi_residual(u, u.values - c, 1.0, g, tg) <= 1e-12
    assert all(b <= a for a, b in zip(hist.cost, hist.cost[1:]))


def test_rejects_inadmissible_start():
    g = GridSpec.interval(1.0, 3)
    tg = TimeGrid(1.0, 2)
    with pytest.raises(ValueError):
        projected_gradient(ControlField(np.full((3, 3), 5.0), -1.0, 1.0),
                           Quadratic(np.zeros((3, 3)), g, tg))


def test_history_rows():
    g = GridSpec.interval(1.0, 3)
    tg = TimeGrid(1.0, 2)
    _, hist = projected_gradient(ControlField(np.zeros((3, 3)), -1, 1),
                                 Quadratic(np.full((3, 3), 0.5), g, tg))
    rows = hist.rows()
    assert rows[0][0] == 0 and rows[0][2] == 0.0
    assert len(rows) == hist.iterations + 1


def test_bang_bang_fraction():
    u = ControlField(np.array([[-1.0, 0.0], [1.0, 1.0], [0.3, 0.3]]), -1.0, 1.0)
    assert bang_bang_fraction(u) == pytest.approx(0.75)


def test_tracking_optimum_satisfies_projection_formula(tracking):
    p = tracking.problem
    reduced = ReducedCost(p)
    u, hist = projected_gradient(tracking.control, reduced, tracking.optimizer)
    assert hist.converged
    adj = reduced.adjoint(u.values)
    res = projection_formula_residual(u, adj.q, p.objective.ell, p.grid, p.tg)
    assert res <= 10 * tracking.optimizer.tol
    assert hist.cost[-1] < hist.cost[0]
