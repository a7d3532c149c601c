"""Logarithmic potential family, the double obstacle and the smooth concave part."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import DomainError, GridMismatchError

LN2 = np.log(2.0)
CONTACT_TOL = 1e-9


@dataclass(frozen=True)
class CustomF2:
    value: Callable
    first: Callable
    second: Callable
    lipschitz: float

    def __post_init__(self):
        if not np.isfinite(self.lipschitz) or self.lipschitz < 0:
            raise ValueError("custom F2 needs a finite Lipschitz bound for F2'")


@dataclass(frozen=True)
class PotentialSpec:
    """``kind`` is ``"logarithmic"`` (with ``gamma``) or ``"obstacle"``.

    The smooth part defaults to ``F2(r) = k (1 - r^2)``.
    """

    kind: str = "logarithmic"
    gamma: float = 1.0
    k: float = 0.0
    custom_f2: Optional[CustomF2] = None

    def __post_init__(self):
        if self.kind not in ("logarithmic", "obstacle"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "logarithmic" and not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.k < 0:
            raise ValueError("F2 coefficient k must be nonnegative")

    @property
    def is_obstacle(self):
        return self.kind == "obstacle"

    def with_gamma(self, gamma):
        return PotentialSpec("logarithmic", gamma, self.k, self.custom_f2)

    def as_obstacle(self):
        return PotentialSpec("obstacle", 1.0, self.k, self.custom_f2)

    def f2_lipschitz(self):
        if self.custom_f2 is not None:
            return self.custom_f2.lipschitz
        return 2.0 * self.k

    def f2_first(self, r):
        if self.custom_f2 is not None:
            return np.asarray(self.custom_f2.first(r), dtype=float)
        return -2.0 * self.k * np.asarray(r, dtype=float)

    def f2_second(self, r):
        if self.custom_f2 is not None:
            return np.asarray(self.custom_f2.second(r), dtype=float) * np.ones_like(r, dtype=float)
        return np.full(np.shape(r), -2.0 * self.k)


def f1log_value(r):
    """``(1+r) ln(1+r) + (1-r) ln(1-r)`` on [-1, 1] with ``0 ln 0 = 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > 1.0) or np.any(~np.isfinite(r)):
        raise DomainError("logarithmic potential is +inf outside [-1, 1]")
    a = 1.0 + r
    b = 1.0 - r
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0)
        tb = np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0)), 0.0)
    out = ta + tb
    return float(out) if out.ndim == 0 else out


def _interior(r):
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) >= 1.0) or np.any(~np.isfinite(r)):
        raise DomainError("derivatives of the logarithmic potential need |r| < 1")
    return r


def f1gamma_first(r, gamma):
    r = _interior(r)
    return _kernels.log_first(np.atleast_1d(r).ravel(), float(gamma)).reshape(r.shape)


def f1gamma_second(r, gamma):
    r = _interior(r)
    return _kernels.log_second(np.atleast_1d(r).ravel(), float(gamma)).reshape(r.shape)


def f1gamma_derivs(r, gamma):
    """Value, first and second derivative of ``gamma * F1log``."""
    r = _interior(r)
    vals = (gamma * f1log_value(r), f1gamma_first(r, gamma), f1gamma_second(r, gamma))
    if r.ndim == 0:
        return tuple(float(v) for v in vals)
    return vals


def obstacle_project(r):
    out = np.clip(r, -1.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def subdiff_residual(phi, xi, contact_tol=CONTACT_TOL):
    """Largest pointwise violation of ``xi ∈ ∂I_[-1,1](phi)``.

    Interior nodes need ``xi = 0``, upper contact ``xi >= 0``, lower contact
    ``xi <= 0``.  Nodes outside [-1, 1] count by their overshoot.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if phi.shape != xi.shape:
        raise GridMismatchError(f"phi {phi.shape} and xi {xi.shape} differ")
    upper = np.abs(phi - 1.0) <= contact_tol
    lower = np.abs(phi + 1.0) <= contact_tol
    inner = ~(upper | lower)
    viol = np.zeros_like(phi)
    viol[inner] = np.abs(xi[inner])
    viol[upper] = np.maximum(-xi[upper], 0.0)
    viol[lower] = np.maximum(xi[lower], 0.0)
    viol = np.maximum(viol, np.abs(phi) - 1.0 - contact_tol)
    return float(viol.max()) if viol.size else 0.0


def f2_derivs(r, spec):
    """Value, first and second derivative of the smooth part ``F2``."""
    if spec.custom_f2 is not None:
        c = spec.custom_f2
        return (c.value(r), c.first(r), c.second(r))
    k = spec.k
    if np.ndim(r) == 0:
        r = float(r)
        return (k * (1.0 - r * r), -2.0 * k * r, -2.0 * k)
    r = np.asarray(r, dtype=float)
    return (k * (1.0 - r * r), -2.0 * k * r, np.full(r.shape, -2.0 * k))
