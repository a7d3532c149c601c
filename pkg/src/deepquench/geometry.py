"""Tensor grids on an interval or rectangle, the Neumann Laplacian, quadrature
and the two time convolutions.

Spatial fields are flat float64 arrays over the nodes.  In 2D the node index is
``iy * nx + ix`` (x fastest).  Space-time fields are arrays of shape
``(steps + 1, n_nodes)``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.linalg import cho_solve_banded, cholesky_banded, solveh_banded

from . import _kernels
from .errors import GridMismatchError


@dataclass(frozen=True)
class GridSpec:
    dimension: int
    extents: tuple
    cells: tuple

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if len(self.extents) != self.dimension or len(self.cells) != self.dimension:
            raise ValueError("extents and cells need one entry per axis")
        if min(self.cells) < 3:
            raise ValueError("need at least 3 nodes per axis")
        if min(self.extents) <= 0:
            raise ValueError("extents must be positive")

    @classmethod
    def interval(cls, length=1.0, nodes=33):
        return cls(1, (length,), (nodes,))

    @classmethod
    def rectangle(cls, lx=1.0, ly=1.0, nx=17, ny=17):
        return cls(2, (lx, ly), (nx, ny))

    @property
    def spacing(self):
        return tuple(e / (c - 1) for e, c in zip(self.extents, self.cells))

    @property
    def n_nodes(self):
        return int(np.prod(self.cells))

    @property
    def shape(self):
        # array shape of a field reshaped to the grid, slow axis first
        return tuple(reversed(self.cells))

    @property
    def measure(self):
        return float(np.prod(self.extents))

    def axes(self):
        return [np.linspace(0.0, e, c) for e, c in zip(self.extents, self.cells)]

    def coordinates(self):
        """Nodal coordinates, one flat array per axis."""
        ax = self.axes()
        if self.dimension == 1:
            return (ax[0],)
        yy, xx = np.meshgrid(ax[1], ax[0], indexing="ij")
        return (xx.ravel(), yy.ravel())

    @cached_property
    def weights(self):
        """Trapezoid (lumped mass) weights."""
        w1 = []
        for h, c in zip(self.spacing, self.cells):
            w = np.full(c, h)
            w[0] = w[-1] = 0.5 * h
            w1.append(w)
        if self.dimension == 1:
            return w1[0]
        return np.outer(w1[1], w1[0]).ravel()

    @cached_property
    def stiffness(self):
        """Sparse stiffness ``K = -M L`` (symmetric positive semidefinite)."""
        mats = []
        for h, c in zip(self.spacing, self.cells):
            main = np.full(c, 2.0 / h)
            main[0] = main[-1] = 1.0 / h
            off = np.full(c - 1, -1.0 / h)
            k1 = sparse.diags([off, main, off], [-1, 0, 1])
            m1 = np.full(c, h)
            m1[0] = m1[-1] = 0.5 * h
            mats.append((k1, sparse.diags(m1)))
        if self.dimension == 1:
            return sparse.csr_matrix(mats[0][0])
        (kx, mx), (ky, my) = mats
        return sparse.csr_matrix(sparse.kron(ky, mx) + sparse.kron(my, kx))

    @property
    def bandwidth(self):
        return 1 if self.dimension == 1 else self.cells[0]

    @cached_property
    def stiffness_banded(self):
        """Upper banded storage of ``K`` as used by ``scipy.linalg.solveh_banded``."""
        bw = self.bandwidth
        n = self.n_nodes
        dia = self.stiffness.todia()
        ab = np.zeros((bw + 1, n))
        for off, row in zip(dia.offsets, dia.data):
            if 0 <= off <= bw:
                # dia stores A[i, i+off] at data[off, i+off]
                ab[bw - off, off:] = row[off:]
        return ab

    def check(self, field, name="field"):
        arr = np.asarray(field, dtype=float)
        if arr.shape != (self.n_nodes,):
            raise GridMismatchError(
                f"{name} has shape {arr.shape}, grid needs ({self.n_nodes},)")
        return arr


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self):
        return self.horizon / self.steps

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.dt

    @property
    def weights(self):
        """Left-rectangle weights over the levels (the last level carries none)."""
        w = np.full(self.steps + 1, self.dt)
        w[-1] = 0.0
        return w

    def check(self, series, grid=None, name="series"):
        arr = np.asarray(series, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != self.steps + 1:
            raise GridMismatchError(
                f"{name} needs {self.steps + 1} time levels, got shape {arr.shape}")
        if grid is not None and arr.shape[1] != grid.n_nodes:
            raise GridMismatchError(
                f"{name} has {arr.shape[1]} nodes, grid has {grid.n_nodes}")
        return arr


def laplacian_neumann(field, grid):
    """Second-difference Laplacian with mirrored ghost nodes."""
    f = grid.check(field)
    if grid.dimension == 1:
        return _kernels.laplacian_1d(np.ascontiguousarray(f), grid.spacing[0])
    hx, hy = grid.spacing
    return _kernels.laplacian_2d(np.ascontiguousarray(f.reshape(grid.shape)), hx, hy).ravel()


def inner_product_l2(a, b, grid):
    a = grid.check(a, "a")
    b = grid.check(b, "b")
    return float(np.dot(grid.weights, a * b))


def norm_l2(a, grid):
    return np.sqrt(max(inner_product_l2(a, a, grid), 0.0))


def gradient(a, grid):
    """Nodal gradient components (central inside, one-sided at the boundary)."""
    a = grid.check(a)
    if grid.dimension == 1:
        return [np.gradient(a, grid.spacing[0])]
    hx, hy = grid.spacing
    gy, gx = np.gradient(a.reshape(grid.shape), hy, hx)
    return [gx.ravel(), gy.ravel()]


def norm_h1(a, grid):
    grad_sq = sum(inner_product_l2(g, g, grid) for g in gradient(a, grid))
    return float(np.sqrt(inner_product_l2(a, a, grid) + grad_sq))


def convolve_forward(series, tg):
    """``(1 * v)(t_k) = dt * sum_{j<k} v_j``; level 0 is zero."""
    v = tg.check(series)
    out = np.zeros_like(v)
    np.cumsum(v[:-1], axis=0, out=out[1:])
    return out * tg.dt


def convolve_backward(series, tg):
    """``(1 ⊛ v)(t_k) = dt * sum_{k<=j<N} v_j``; level N is zero."""
    v = tg.check(series)
    out = np.zeros_like(v)
    out[:-1] = np.cumsum(v[-2::-1], axis=0)[::-1]
    return out * tg.dt


def inner_product_q(a, b, grid, tg):
    """Space-time inner product: trapezoid in space, left rectangle in time."""
    a = tg.check(a, grid, "a")
    b = tg.check(b, grid, "b")
    return float(tg.weights @ ((a * b) @ grid.weights))


def norm_q(a, grid, tg):
    return np.sqrt(max(inner_product_q(a, a, grid, tg), 0.0))


def norm_linf_l2(series, grid):
    """max over levels of the spatial L2 norm."""
    s = np.asarray(series, dtype=float)
    return float(np.sqrt(np.max((s * s) @ grid.weights)))


def norm_l2_h1(series, grid, tg):
    """Discrete L2(0,T; H1) norm."""
    s = tg.check(series, grid)
    vals = np.array([norm_h1(lvl, grid) ** 2 for lvl in s])
    return float(np.sqrt(tg.weights @ vals))


def norm_linf_h1(series, grid):
    return float(max(norm_h1(lvl, grid) for lvl in np.asarray(series)))


def norm_h1_l2(series, grid, tg):
    """Discrete H1(0,T; L2): L2 in time of the field and its difference quotient."""
    s = tg.check(series, grid)
    dq = np.diff(s, axis=0) / tg.dt
    val = (tg.weights * ((s * s) @ grid.weights)).sum()
    val += tg.dt * ((dq * dq) @ grid.weights).sum()
    return float(np.sqrt(val))


class WeightedSystem:
    """Factorised ``M diag(a) + c K`` for repeated solves.

    The matrix is symmetric positive definite whenever ``a > 0`` and ``c >= 0``.
    """

    def __init__(self, grid, a, c):
        self.grid = grid
        ab = c * grid.stiffness_banded
        ab[-1] += grid.weights * np.broadcast_to(a, (grid.n_nodes,))
        self.factor = cholesky_banded(ab, lower=False, check_finite=False)

    def solve(self, rhs):
        return cho_solve_banded((self.factor, False), rhs, check_finite=False)


def solve_weighted(grid, a, c, rhs):
    """One-off solve of ``(M diag(a) + c K) x = rhs``."""
    diag = grid.weights * np.broadcast_to(a, (grid.n_nodes,))
    if grid.dimension == 1:
        h = grid.spacing[0]
        kd = np.full(grid.n_nodes, 2.0 / h)
        kd[0] = kd[-1] = 1.0 / h
        off = np.full(grid.n_nodes - 1, -c / h)
        return _kernels.tridiag_solve(diag + c * kd, off, np.ascontiguousarray(rhs))
    ab = c * grid.stiffness_banded
    ab[-1] += diag
    return solveh_banded(ab, rhs, check_finite=False)
