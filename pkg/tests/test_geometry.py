import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepquench import _kernels
from deepquench.errors import GridMismatchError
from deepquench.geometry import (GridSpec, TimeGrid, WeightedSystem, convolve_backward,
                                 convolve_forward, inner_product_l2, inner_product_q,
                                 laplacian_neumann, norm_h1, norm_l2, norm_q, solve_weighted)


@pytest.mark.parametrize("grid", [GridSpec.interval(2.0, 17), GridSpec.rectangle(1.0, 0.5, 9, 5)])
def test_weights_integrate_constants(grid):
    assert grid.weights.sum() == pytest.approx(grid.measure, rel=1e-14)


@pytest.mark.parametrize("grid", [GridSpec.interval(1.0, 17), GridSpec.rectangle(1.0, 1.0, 8, 6)])
def test_stiffness_symmetric_with_constant_kernel(grid):
    K = grid.stiffness.toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    np.testing.assert_allclose(K @ np.ones(grid.n_nodes), 0.0, atol=1e-10)
    assert np.linalg.eigvalsh(K).min() > -1e-9


def test_stiffness_is_weighted_negative_laplacian(rng):
    grid = GridSpec.rectangle(1.0, 2.0, 7, 9)
    f = rng.standard_normal(grid.n_nodes)
    np.testing.assert_allclose(grid.stiffness @ f, -grid.weights * laplacian_neumann(f, grid),
                               rtol=1e-12, atol=1e-10)


def test_laplacian_second_order():
    errs = []
    for n in (17, 33, 65):
        g = GridSpec.interval(1.0, n)
        x = g.coordinates()[0]
        errs.append(np.abs(laplacian_neumann(np.cos(np.pi * x), g)
                           + np.pi ** 2 * np.cos(np.pi * x)).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_norms_of_known_fields():
    g = GridSpec.interval(1.0, 201)
    x = g.coordinates()[0]
    f = np.cos(np.pi * x)
    assert norm_l2(f, g) == pytest.approx(np.sqrt(0.5), rel=1e-4)
    assert norm_h1(f, g) == pytest.approx(np.sqrt(0.5 + 0.5 * np.pi ** 2), rel=1e-3)
    assert inner_product_l2(f, np.ones_like(f), g) == pytest.approx(0.0, abs=1e-14)


def test_time_weights_left_rectangle():
    tg = TimeGrid(1.0, 4)
    np.testing.assert_allclose(tg.weights, [0.25, 0.25, 0.25, 0.25, 0.0])
    g = GridSpec.interval(1.0, 3)
    a = np.ones((5, 3))
    assert inner_product_q(a, a, g, tg) == pytest.approx(1.0)
    assert norm_q(a, g, tg) == pytest.approx(1.0)


def test_convolutions_adjoint_up_to_diagonal(rng):
    # the backward sum includes j = k, the forward one does not
    g = GridSpec.interval(1.0, 5)
    tg = TimeGrid(1.0, 10)
    a = rng.standard_normal((11, 5))
    b = rng.standard_normal((11, 5))
    lhs = inner_product_q(convolve_forward(a, tg), b, g, tg)
    rhs = inner_product_q(a, convolve_backward(b, tg), g, tg)
    assert rhs - lhs == pytest.approx(tg.dt * inner_product_q(a, b, g, tg), rel=1e-12)


def test_convolve_forward_of_constant_is_time():
    tg = TimeGrid(2.0, 8)
    out = convolve_forward(np.ones((9, 1)), tg)
    np.testing.assert_allclose(out[:, 0], tg.times, atol=1e-14)


@pytest.mark.parametrize("grid", [GridSpec.interval(1.0, 21), GridSpec.rectangle(1.0, 1.0, 6, 7)])
def test_weighted_solve_matches_dense(grid, rng):
    a = 1.0 + rng.uniform(size=grid.n_nodes)
    rhs = rng.standard_normal(grid.n_nodes)
    A = np.diag(grid.weights * a) + 0.3 * grid.stiffness.toarray()
    ref = np.linalg.solve(A, rhs)
    np.testing.assert_allclose(solve_weighted(grid, a, 0.3, rhs), ref, rtol=1e-10)
    np.testing.assert_allclose(WeightedSystem(grid, a, 0.3).solve(rhs), ref, rtol=1e-10)


def test_grid_mismatch_raises():
    g = GridSpec.interval(1.0, 5)
    with pytest.raises(GridMismatchError):
        norm_l2(np.zeros(6), g)
    with pytest.raises(GridMismatchError):
        TimeGrid(1.0, 4).check(np.zeros((4, 5)), g)


@pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")
def test_numba_and_numpy_kernels_agree(rng):
    f = rng.standard_normal(33)
    f2 = rng.standard_normal((9, 7))
    r = rng.uniform(-0.999, 0.999, 50)
    np.testing.assert_allclose(_kernels.laplacian_1d_nb(f, 0.1), _kernels.laplacian_1d_py(f, 0.1),
                               rtol=1e-13)
    np.testing.assert_allclose(_kernels.laplacian_2d_nb(f2, 0.1, 0.2),
                               _kernels.laplacian_2d_py(f2, 0.1, 0.2), rtol=1e-12, atol=1e-10)
    np.testing.assert_allclose(_kernels.log_first_nb(r, 0.3), _kernels.log_first_py(r, 0.3),
                               rtol=1e-13)
    np.testing.assert_allclose(_kernels.log_second_nb(r, 0.3), _kernels.log_second_py(r, 0.3),
                               rtol=1e-13)
    d = 3.0 + rng.uniform(size=33)
    off = -np.ones(32)
    np.testing.assert_allclose(_kernels.tridiag_solve_nb(d, off, f),
                               _kernels.tridiag_solve_py(d, off, f), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.floats(0.1, 10.0))
def test_laplacian_annihilates_constants(n, length):
    g = GridSpec.interval(length, n)
    np.testing.assert_allclose(laplacian_neumann(np.full(n, 3.7), g), 0.0, atol=1e-8)


def test_env_flag_selects_numpy_backend_with_same_results():
    import json
    import subprocess
    import sys

    from conftest import config_path
    snippet = ("import json; from deepquench import _kernels; "
               "from deepquench.config import load_config; "
               f"r = load_config({config_path('gradient_check_1d.json')!r}); "
               "t = r.problem.solve(r.control.values); "
               "print(json.dumps([_kernels.backend(), t.phi[-1].tolist()]))")
    out = {}
    for flag in ("0", "1"):
        env = dict(__import__("os").environ, DEEPQUENCH_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", snippet], env=env, capture_output=True,
                             text=True, check=True)
        out[flag] = json.loads(res.stdout)
    assert out["0"][0] == "numpy"
    if _kernels.HAS_NUMBA:
        assert out["1"][0] == "numba"
    np.testing.assert_allclose(out["0"][1], out["1"][1], rtol=1e-10, atol=1e-13)
