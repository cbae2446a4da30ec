"""Uniform meshes of the unit torus and of [0, T], plus the difference and
quadrature kernels every other module builds on.

Fields are stored as plain 1-D float arrays of length ``grid.n``; node ``i``
sits at ``x_i = i h`` and all index arithmetic wraps modulo ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .errors import DominanceViolation


@dataclass(frozen=True)
class TorusGrid:
    n: int
    h: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"TorusGrid needs an integer n >= 4, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "h", 1.0 / self.n)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    nt: int
    dt: float = field(init=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T!r}")
        if int(self.nt) != self.nt or self.nt < 1:
            raise ValueError(f"nt must be a positive integer, got {self.nt!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "nt", int(self.nt))
        object.__setattr__(self, "dt", self.T / self.nt)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)


def shift(f, k: int) -> np.ndarray:
    """Periodic shift: ``shift(f, k)[i] == f[i - k]``."""
    return np.roll(f, k)


def gradient_centered(f, grid: TorusGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * grid.h)


def gradient_forward(f, grid: TorusGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return (np.roll(f, -1) - f) / grid.h


def gradient_backward(f, grid: TorusGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return (f - np.roll(f, 1)) / grid.h


def laplacian(f, grid: TorusGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / grid.h**2


def integrate(f, grid: TorusGrid) -> float:
    """Rectangle rule ``h * sum(f)``; exact for trigonometric polynomials of
    degree below ``n``."""
    return float(grid.h * np.sum(f))


class CyclicTridiagonal:
    """Constant-coefficient cyclic tridiagonal operator

        (A y)_i = diag * y_i + off * (y_{i-1} + y_{i+1}),   indices mod n,

    solved by a Sherman-Morrison correction of a plain tridiagonal system.
    The correction vector depends only on the matrix, so it is computed once.
    """

    def __init__(self, diag: float, off: float, n: int):
        if not abs(diag) > 2.0 * abs(off):
            raise DominanceViolation(
                f"cyclic tridiagonal matrix is not strictly diagonally dominant: "
                f"|diag|={abs(diag)!r} <= 2|off|={2 * abs(off)!r}")
        self.diag, self.off, self.n = float(diag), float(off), int(n)
        gamma = -self.diag
        band = np.empty((3, n))
        band[0, :] = off
        band[1, :] = diag
        band[2, :] = off
        band[1, 0] -= gamma
        band[1, -1] -= off * off / gamma
        self._band = band
        corner = np.zeros(n)
        corner[0] = gamma
        corner[-1] = off
        self._v_last = off / gamma
        self._z = solve_banded((1, 1), band, corner)
        self._denom = 1.0 + self._z[0] + self._v_last * self._z[-1]

    def apply(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.diag * y + self.off * (np.roll(y, 1) + np.roll(y, -1))

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        y = solve_banded((1, 1), self._band, rhs)
        factor = (y[0] + self._v_last * y[-1]) / self._denom
        return y - factor * self._z


@lru_cache(maxsize=64)
def _cyclic(diag: float, off: float, n: int) -> CyclicTridiagonal:
    return CyclicTridiagonal(diag, off, n)


def periodic_tridiag_solve(diag: float, off: float, rhs) -> np.ndarray:
    """Solve ``diag*y_i + off*(y_{i-1}+y_{i+1}) = rhs_i`` on the torus."""
    rhs = np.asarray(rhs, dtype=float)
    return _cyclic(float(diag), float(off), rhs.size).solve(rhs)


def heat_operator(nu: float, dt: float, grid: TorusGrid) -> CyclicTridiagonal:
    """The implicit diffusion matrix ``I - nu*dt*Laplacian_h``."""
    c = nu * dt / grid.h**2
    return _cyclic(1.0 + 2.0 * c, -c, grid.n)
