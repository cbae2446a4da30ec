import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mfgc.errors import DominanceViolation
from mfgc.grid import (TimeGrid, TorusGrid, gradient_centered, heat_operator, integrate,
                       laplacian, periodic_tridiag_solve, shift)


def test_grid_construction():
    g = TorusGrid(64)
    assert g.h * g.n == pytest.approx(1.0, abs=np.spacing(1.0))
    assert g.nodes[1] == g.h and g.nodes.size == 64
    with pytest.raises(ValueError):
        TorusGrid(3)
    tg = TimeGrid(1.0, 256)
    assert tg.dt == 1.0 / 256 and tg.times[-1] == 1.0
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_gradient_of_constant_is_zero(grid64):
    assert np.all(gradient_centered(np.full(64, 3.7), grid64) == 0.0)


def test_gradient_of_sine_within_taylor_bound(grid64):
    x = grid64.nodes
    err = np.max(np.abs(gradient_centered(np.sin(2 * np.pi * x), grid64) - 2 * np.pi * np.cos(2 * np.pi * x)))
    assert err <= (2 * np.pi) ** 3 * grid64.h**2 / 6


def test_gradient_of_sawtooth_across_the_seam():
    n = 16
    g = TorusGrid(n)
    d = gradient_centered(g.nodes, g)
    # interior nodes see a slope of 1; the two nodes next to the seam see the
    # jump of size -(n-1)h averaged with one regular step: (1 - (n-1)) / 2
    assert np.allclose(d[1:-1], 1.0, rtol=0, atol=1e-12)
    assert d[0] == pytest.approx((2 - n) / 2, abs=1e-12)
    assert d[-1] == pytest.approx((2 - n) / 2, abs=1e-12)


def test_integrate_examples(grid64):
    x = grid64.nodes
    assert integrate(np.ones(64), grid64) == 1.0
    assert abs(integrate(np.sin(2 * np.pi * x), grid64)) < 1e-15
    assert integrate(np.sin(2 * np.pi * x) ** 2, grid64) == pytest.approx(0.5, abs=1e-15)


def test_tridiag_identity_and_constant():
    rhs = np.random.default_rng(0).normal(size=12)
    assert np.allclose(periodic_tridiag_solve(1.0, 0.0, rhs), rhs, atol=1e-15)
    y = periodic_tridiag_solve(3.0, -1.0, np.full(12, 2.0))
    assert np.allclose(y, 2.0 / (3.0 - 2.0), atol=1e-14)


def test_tridiag_random_residual():
    rng = np.random.default_rng(1)
    rhs = rng.normal(size=16)
    y = periodic_tridiag_solve(3.0, -1.0, rhs)
    back = 3.0 * y - (np.roll(y, 1) + np.roll(y, -1))
    assert np.max(np.abs(back - rhs)) <= 1e-12 * np.max(np.abs(rhs))


def test_tridiag_dominance_violation():
    with pytest.raises(DominanceViolation):
        periodic_tridiag_solve(2.0, -1.0, np.ones(8))


def test_heat_operator_fourier_eigenvalue():
    g = TorusGrid(32)
    x = g.nodes
    f = np.cos(2 * np.pi * x)
    lam = 2 * (1 - np.cos(2 * np.pi * g.h)) / g.h**2
    assert np.allclose(laplacian(f, g), -lam * f, atol=1e-9)
    A = heat_operator(1.0, 0.01, g)
    assert np.allclose(A.solve(f), f / (1 + 0.01 * lam), atol=1e-13)


fields = arrays(np.float64, st.integers(4, 40), elements=st.floats(-1e3, 1e3))


@given(fields, st.integers(-50, 50))
def test_gradient_shift_equivariance(f, k):
    g = TorusGrid(f.size)
    assert np.allclose(gradient_centered(shift(f, k), g), shift(gradient_centered(f, g), k),
                       rtol=0, atol=1e-9)


@given(fields)
def test_gradient_integrates_to_zero(f):
    g = TorusGrid(f.size)
    scale = 1.0 + np.max(np.abs(f)) / g.h
    assert abs(integrate(gradient_centered(f, g), g)) <= 1e-13 * scale


@given(st.floats(0.1, 10), st.floats(-0.99, 0.99), st.integers(4, 64), st.integers(0, 2**32 - 1))
def test_tridiag_solve_is_exact_inverse(diag, ratio, n, seed):
    off = ratio * diag / 2
    rhs = np.random.default_rng(seed).normal(size=n)
    y = periodic_tridiag_solve(diag, off, rhs)
    back = diag * y + off * (np.roll(y, 1) + np.roll(y, -1))
    # conditioning degrades as |diag| -> 2|off|
    cond = abs(diag) / (abs(diag) - 2 * abs(off))
    assert np.max(np.abs(back - rhs)) <= 1e-12 * cond * np.max(np.abs(rhs))
