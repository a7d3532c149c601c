import numpy as np
import pytest

from deepquench.geometry import GridSpec, TimeGrid
from deepquench.objective import (ControlField, ObjectiveSpec, cost_terms, evaluate_adapted_cost,
                                  evaluate_cost, reduced_gradient)
from deepquench.oracles import cost_by_summation


def test_cost_matches_explicit_summation(coupled):
    u = np.random.default_rng(3).standard_normal(coupled.problem.control_shape)
    traj = coupled.problem.solve(u)
    spec = coupled.problem.objective
    assert evaluate_cost(traj, u, spec) == pytest.approx(cost_by_summation(traj, u, spec),
                                                         rel=1e-13)


def test_reference_cost_value(coupled):
    traj = coupled.problem.solve(coupled.control.values)
    assert evaluate_cost(traj, coupled.control.values, coupled.problem.objective) == \
        pytest.approx(0.4151419710227704, rel=1e-10)


def test_cost_terms_are_nonnegative_and_sum(coupled):
    traj = coupled.problem.solve(coupled.control.values)
    terms = cost_terms(traj, coupled.control.values, coupled.problem.objective)
    assert len(terms) == 7
    assert all(t >= 0 for t in terms)
    assert sum(terms) == pytest.approx(evaluate_cost(traj, coupled.control.values,
                                                     coupled.problem.objective))


def test_control_penalty_is_half_ell_norm_squared():
    g = GridSpec.interval(1.0, 3)
    tg = TimeGrid(1.0, 2)
    spec = ObjectiveSpec(ell=2.0).resolve(g, tg)

    class T:
        grid, tg = g, TimeGrid(1.0, 2)
        phi = w = v = np.zeros((3, 3))
    assert cost_terms(T, np.ones((3, 3)), spec)[-1] == pytest.approx(1.0)


def test_adapted_cost_adds_half_distance(coupled):
    p = coupled.problem
    u = np.full(p.control_shape, 0.2)
    traj = p.solve(u)
    extra = evaluate_adapted_cost(traj, u, p.objective, np.zeros_like(u)) - \
        evaluate_cost(traj, u, p.objective)
    assert extra == pytest.approx(0.5 * 0.04 * p.tg.horizon, rel=1e-12)


def test_reduced_gradient_formula():
    class A:
        q = np.ones((2, 2))
    spec = ObjectiveSpec(ell=0.5)
    u = np.full((2, 2), 2.0)
    np.testing.assert_allclose(reduced_gradient(A, u, spec), 2.0)
    np.testing.assert_allclose(reduced_gradient(A, u, spec, adapted_to=np.ones((2, 2))), 3.0)


def test_weight_assumptions():
    g = GridSpec.interval(1.0, 3)
    tg = TimeGrid(1.0, 2)
    with pytest.raises(ValueError, match=r"\(A4\)"):
        ObjectiveSpec().resolve(g, tg)
    with pytest.raises(ValueError, match=r"\(A4\)"):
        ObjectiveSpec(k1=-1.0, k2=1.0).resolve(g, tg)
    spec = ObjectiveSpec(k2=1.0).resolve(g, tg)
    assert spec.phi_Q.shape == (3, 3) and spec.wp_Omega.shape == (3,)


def test_control_bounds_assumption():
    with pytest.raises(ValueError, match=r"\(A6\)"):
        ControlField(np.zeros(3), 1.0, 0.0)
    u = ControlField(np.array([0.0, 0.5]), -1.0, 0.4)
    assert not u.is_admissible()
    assert u.with_values(np.zeros(2)).is_admissible()
