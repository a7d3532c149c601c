import dataclasses

import numpy as np
import pytest

from deepquench.errors import SolverError
from deepquench.geometry import GridSpec, TimeGrid
from deepquench.objective import ObjectiveSpec
from deepquench.oracles import scalar_backward_euler_step
from deepquench.potentials import PotentialSpec
from deepquench.problem import Problem
from deepquench.state import (InitialData, ModelParams, SolverOptions, mean_value, solve_state,
                              solve_state_obstacle, step_phase)


def constant_problem(phi0, gamma=0.5, nodes=9, steps=20, horizon=0.5):
    g = GridSpec.interval(1.0, nodes)
    tg = TimeGrid(horizon, steps)
    init = InitialData(np.full(nodes, phi0), np.zeros(nodes), np.zeros(nodes))
    return Problem(g, tg, ModelParams(), PotentialSpec(gamma=gamma, k=0.0), init,
                   ObjectiveSpec(k1=1.0))


def test_stationary_solution_stays_at_rest():
    p = constant_problem(0.0)
    traj = p.solve(np.zeros(p.control_shape))
    assert np.abs(traj.phi).max() == 0.0
    assert np.abs(traj.w).max() == 0.0
    assert np.abs(traj.v).max() == 0.0


def test_constant_data_match_scalar_backward_euler():
    p = constant_problem(0.6, gamma=0.3)
    traj = p.solve(np.zeros(p.control_shape))
    ref = 0.6
    for k in range(1, 6):
        ref = scalar_backward_euler_step(ref, 0.3, p.tg.dt)
        np.testing.assert_allclose(traj.phi[k], ref, rtol=0, atol=1e-13)


def test_reference_trajectory_values(coupled):
    traj = coupled.problem.solve(coupled.control.values)
    assert traj.phi[-1, 0] == pytest.approx(0.19841060450687592, rel=1e-10)
    assert traj.w[-1, 8] == pytest.approx(0.11339640652337328, rel=1e-10)
    assert traj.v[-1, 16] == pytest.approx(-0.001150742922524794, rel=1e-8)


def test_logarithmic_trajectory_strictly_interior(tracking):
    traj = tracking.problem.solve(tracking.control.values)
    assert traj.stats["max_abs_phi"] < 1.0
    assert traj.stats["phi_min"] > -1.0


def test_thermal_displacement_integrates_temperature(coupled):
    traj = coupled.problem.solve(coupled.control.values)
    np.testing.assert_allclose(np.diff(traj.w, axis=0), coupled.problem.tg.dt * traj.v[1:],
                               atol=1e-14)


def test_energy_balance_of_mean_temperature(coupled):
    u = np.random.default_rng(0).standard_normal(coupled.problem.control_shape)
    traj = coupled.problem.solve(u)
    assert traj.conservation_defect(u) < 1e-9


def test_no_coupling_means_heat_equation_conserves_mean():
    g = GridSpec.interval(1.0, 17)
    tg = TimeGrid(0.5, 25)
    x = g.coordinates()[0]
    init = InitialData(0.3 * np.cos(np.pi * x), np.zeros(17), np.cos(np.pi * x) + 0.2)
    traj = solve_state(np.zeros((26, 17)), init, PotentialSpec(gamma=0.1, k=0.0),
                       ModelParams(), tg, g)
    means = [mean_value(v, g) for v in traj.v]
    np.testing.assert_allclose(means, 0.2, atol=1e-12)


def test_newton_failure_is_reported_with_level(tracking):
    p = dataclasses.replace(tracking.problem, solver=SolverOptions(max_iter=1, newton_tol=1e-15))
    with pytest.raises(SolverError) as info:
        p.solve(tracking.control.values)
    assert info.value.level == 1
    assert "Newton" in str(info.value)


def test_step_phase_rejects_obstacle(tracking):
    p = tracking.problem
    with pytest.raises(ValueError):
        step_phase(p.init.phi0, p.init.v0, p.potential.as_obstacle(), p.params, p.tg.dt, p.grid)


def test_initial_data_must_be_interior():
    g = GridSpec.interval(1.0, 5)
    init = InitialData(np.array([0.0, 0.5, 1.0, 0.5, 0.0]), np.zeros(5), np.zeros(5))
    with pytest.raises(ValueError, match=r"\(A3\)"):
        init.validate(g)
    ok = InitialData(np.linspace(-0.5, 0.25, 5), np.zeros(5), np.zeros(5))
    assert ok.validate(g) == (-0.5, 0.25)


@pytest.mark.parametrize("field", ["alpha", "beta", "theta_c"])
def test_model_parameters_positive(field):
    with pytest.raises(ValueError):
        ModelParams(**{field: 0.0})


def test_obstacle_contact_instance(contact):
    traj = contact.problem.solve(contact.control.values)
    assert traj.stats["max_abs_phi"] == 1.0
    assert traj.stats["contact_fraction"] == pytest.approx(0.027002700270027002)
    assert traj.stats["subdiff_residual"] <= 1e-8
    assert traj.phi[-1, 5] == pytest.approx(0.9578208350511195, rel=1e-9)
    # multiplier vanishes off contact, and has the right sign on it
    at_top = traj.phi == 1.0
    off = np.abs(traj.phi) < 1.0
    assert np.all(traj.xi[off] == 0.0)
    assert np.all(traj.xi[at_top] >= 0.0)


def test_log_version_of_contact_instance_fails_cleanly(contact):
    p = contact.problem.with_potential(contact.problem.potential.with_gamma(0.1))
    with pytest.raises(SolverError, match="double precision"):
        p.solve(contact.control.values)


def test_obstacle_equals_log_limit_without_contact(tracking):
    p = tracking.problem
    u = tracking.control.values
    ob = p.with_potential(p.potential.as_obstacle()).solve(u)
    lg = p.with_potential(p.potential.with_gamma(1e-6)).solve(u)
    assert ob.stats["contact_fraction"] == 0.0
    assert np.abs(ob.phi - lg.phi).max() < 1e-4


def test_obstacle_solver_without_f2():
    g = GridSpec.interval(1.0, 9)
    tg = TimeGrid(0.2, 10)
    init = InitialData(np.full(9, 0.5), np.zeros(9), np.zeros(9))
    traj = solve_state_obstacle(np.zeros((11, 9)), init, ModelParams(), tg, g)
    # nothing drives the constant state: it stays put with zero multiplier
    np.testing.assert_allclose(traj.phi, 0.5, atol=1e-14)
    assert np.abs(traj.xi).max() == 0.0


def test_symmetry_is_preserved_in_2d():
    g = GridSpec.rectangle(1.0, 1.0, 12, 12)
    tg = TimeGrid(0.05, 5)
    x, y = g.coordinates()
    phi0 = 0.4 * np.cos(np.pi * x) * np.cos(np.pi * y)
    init = InitialData(phi0, np.zeros_like(x), np.zeros_like(x))
    traj = solve_state(np.zeros((6, g.n_nodes)), init, PotentialSpec(gamma=0.1, k=0.5),
                       ModelParams(), tg, g)
    last = traj.phi[-1].reshape(g.shape)
    np.testing.assert_allclose(last, last.T, atol=1e-12)
