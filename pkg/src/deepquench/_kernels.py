"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``DEEPQUENCH_NUMBA`` is not
set to ``0``.  Both variants are always importable under the ``*_py`` and
``*_nb`` names so they can be benchmarked side by side.
"""

import os

import numpy as np
from scipy.linalg import solveh_banded

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("DEEPQUENCH_NUMBA", "1") != "0"


# --- pure numpy ------------------------------------------------------------

def laplacian_1d_py(f, h):
    out = np.empty_like(f)
    inv = 1.0 / (h * h)
    out[1:-1] = (f[:-2] - 2.0 * f[1:-1] + f[2:]) * inv
    out[0] = 2.0 * (f[1] - f[0]) * inv
    out[-1] = 2.0 * (f[-2] - f[-1]) * inv
    return out


def laplacian_2d_py(f, hx, hy):
    # f has shape (ny, nx); ghost values mirror the first interior neighbour
    g = np.pad(f, 1, mode="reflect")
    return ((g[1:-1, :-2] - 2.0 * f + g[1:-1, 2:]) / (hx * hx)
            + (g[:-2, 1:-1] - 2.0 * f + g[2:, 1:-1]) / (hy * hy))


def log_first_py(r, gamma):
    return gamma * (np.log1p(r) - np.log1p(-r))


def log_second_py(r, gamma):
    return 2.0 * gamma / ((1.0 - r) * (1.0 + r))


def tridiag_solve_py(diag, off, rhs):
    """Solve a symmetric tridiagonal system; ``off[i]`` couples i and i+1."""
    ab = np.empty((2, diag.size))
    ab[0, 0] = 0.0
    ab[0, 1:] = off
    ab[1] = diag
    return solveh_banded(ab, rhs, check_finite=False)


# --- numba -----------------------------------------------------------------

if HAS_NUMBA:

    @numba.njit(cache=True)
    def laplacian_1d_nb(f, h):
        n = f.size
        out = np.empty(n)
        inv = 1.0 / (h * h)
        out[0] = 2.0 * (f[1] - f[0]) * inv
        for i in range(1, n - 1):
            out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * inv
        out[n - 1] = 2.0 * (f[n - 2] - f[n - 1]) * inv
        return out

    @numba.njit(cache=True)
    def laplacian_2d_nb(f, hx, hy):
        ny, nx = f.shape
        out = np.empty((ny, nx))
        ix2 = 1.0 / (hx * hx)
        iy2 = 1.0 / (hy * hy)
        for j in range(ny):
            jm = j - 1 if j > 0 else 1
            jp = j + 1 if j < ny - 1 else ny - 2
            for i in range(nx):
                im = i - 1 if i > 0 else 1
                ip = i + 1 if i < nx - 1 else nx - 2
                c = 2.0 * f[j, i]
                out[j, i] = ((f[j, im] - c + f[j, ip]) * ix2
                             + (f[jm, i] - c + f[jp, i]) * iy2)
        return out

    @numba.njit(cache=True)
    def log_first_nb(r, gamma):
        out = np.empty_like(r)
        for i in range(r.size):
            out[i] = gamma * (np.log1p(r[i]) - np.log1p(-r[i]))
        return out

    @numba.njit(cache=True)
    def log_second_nb(r, gamma):
        out = np.empty_like(r)
        for i in range(r.size):
            out[i] = 2.0 * gamma / ((1.0 - r[i]) * (1.0 + r[i]))
        return out

    @numba.njit(cache=True)
    def tridiag_solve_nb(diag, off, rhs):
        # Thomas algorithm; callers only pass diagonally dominant SPD systems
        n = diag.size
        c = np.empty(n)
        d = np.empty(n)
        beta = diag[0]
        c[0] = off[0] / beta if n > 1 else 0.0
        d[0] = rhs[0] / beta
        for i in range(1, n):
            a = off[i - 1]
            beta = diag[i] - a * c[i - 1]
            if i < n - 1:
                c[i] = off[i] / beta
            d[i] = (rhs[i] - a * d[i - 1]) / beta
        x = np.empty(n)
        x[n - 1] = d[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = d[i] - c[i] * x[i + 1]
        return x

else:  # pragma: no cover
    laplacian_1d_nb = laplacian_1d_py
    laplacian_2d_nb = laplacian_2d_py
    log_first_nb = log_first_py
    log_second_nb = log_second_py
    tridiag_solve_nb = tridiag_solve_py


if USE_NUMBA:
    laplacian_1d = laplacian_1d_nb
    laplacian_2d = laplacian_2d_nb
    log_first = log_first_nb
    log_second = log_second_nb
    tridiag_solve = tridiag_solve_nb
else:
    laplacian_1d = laplacian_1d_py
    laplacian_2d = laplacian_2d_py
    log_first = log_first_py
    log_second = log_second_py
    tridiag_solve = tridiag_solve_py


def backend():
    return "numba" if USE_NUMBA else "numpy"
