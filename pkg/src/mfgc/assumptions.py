"""Falsification of the structural assumptions by random sampling, and the
crowd-motion optimal-control machinery for general exponents.

``verify_sampled`` draws points ``(x, p, mu)`` and evaluates each inequality
as a margin ``rhs - lhs``; a negative margin is a violation and its sample is
kept as a reproducible witness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoConvergence
from .models import (CrowdMotion, Flocking, JointMeasure, Model, StructuralConstants, conjugate)
from .mufix import lambda_moment


@dataclass
class CheckResult:
    name: str
    worst_margin: float = math.inf
    samples: int = 0
    violations: int = 0
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"name": self.name, "worst_margin": self.worst_margin, "samples": self.samples,
                "violations": self.violations, "witness": self.witness}


@dataclass
class AssumptionReport:
    model: str
    seed: int
    checks: Dict[str, CheckResult] = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return sum(c.violations for c in self.checks.values())

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"model": self.model, "seed": self.seed, "violations": self.violations,
                "checks": {k: v.to_dict() for k, v in self.checks.items()}}

    def lines(self):
        for c in self.checks.values():
            status = "ok" if c.violations == 0 else f"{c.violations} VIOLATIONS"
            yield f"{c.name:<10} samples={c.samples:<6d} worst_margin={c.worst_margin:+.6e}  {status}"


def random_density(rng, grid, max_modes: int = 8) -> np.ndarray:
    """Positive density ``1 + trig polynomial`` with oscillation at most 0.9."""
    x = grid.nodes
    k = rng.integers(1, max_modes + 1)
    f = np.zeros(grid.n)
    for mode in range(1, k + 1):
        a, b = rng.normal(size=2) / mode
        f += a * np.cos(2 * math.pi * mode * x) + b * np.sin(2 * math.pi * mode * x)
    scale = rng.uniform(0.0, 0.9) / max(float(np.max(np.abs(f))), 1e-300)
    m = 1.0 + scale * f
    return m / (grid.h * np.sum(m))


def random_control(rng, grid, amp_max: float, max_modes: int = 8) -> np.ndarray:
    """Random Fourier series with at most ``max_modes`` modes and sup norm
    drawn uniformly in ``[0, amp_max]``."""
    x = grid.nodes
    k = rng.integers(1, max_modes + 1)
    f = np.full(grid.n, rng.normal())
    for mode in range(1, k + 1):
        a, b = rng.normal(size=2)
        f += a * np.cos(2 * math.pi * mode * x) + b * np.sin(2 * math.pi * mode * x)
    return f * (rng.uniform(0.0, amp_max) / max(float(np.max(np.abs(f))), 1e-300))


class _Recorder:
    def __init__(self, names):
        self.checks = {n: CheckResult(n) for n in names}

    def record(self, name, lhs, rhs, context, slack=0.0):
        lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
        margin = rhs + slack - lhs
        c = self.checks[name]
        c.samples += margin.size
        bad = margin < 0.0
        c.violations += int(np.count_nonzero(bad))
        i = int(np.argmin(margin))
        if margin[i] < c.worst_margin:
            c.worst_margin = float(margin[i])
            if bad[i]:
                c.witness = context(i)
                c.witness.update(lhs=float(lhs[i]), rhs=float(rhs[i]))
        return margin


def verify_sampled(model: Model, n_samples: int = 10_000, seed: int = 0, p_max: float = 10.0,
                   amp_max: float = 10.0, n_measures: int = 64,
                   constants: Optional[StructuralConstants] = None,
                   fd_step: float = 1e-5) -> AssumptionReport:
    """Sample the convexity, drift-growth, contraction and the three
    Hamiltonian-growth inequalities with the model's (or the given) constants."""
    c = constants or model.constants()
    grid = model.grid
    rng = np.random.default_rng(seed)
    names = ["convexity", "FP1", "FP2", "B1", "B2", "B3"]
    kernel_model = isinstance(model, (CrowdMotion, Flocking))
    if kernel_model:
        names.append("V_bound")
    rec = _Recorder(names)
    q, qp, C0, lam0 = c.q, c.q_prime, c.C0, c.lambda0
    C = c.growth
    lam1 = c.lambda1
    lam2 = c.lambda2 if c.lambda2 is not None else 0.0
    per = max(1, math.ceil(n_samples / n_measures))
    done = 0
    j = 0
    while done < n_samples:
        count = min(per, n_samples - done)
        m = random_density(rng, grid)
        a1 = random_control(rng, grid, amp_max)
        a2 = random_control(rng, grid, amp_max)
        idx = rng.integers(0, grid.n, size=count)
        x = grid.nodes[idx]
        p = rng.uniform(-p_max, p_max, size=count)
        mu1 = JointMeasure(grid, m, a1)
        mu2 = JointMeasure(grid, m, a2)
        g1 = model.aggregates(mu1, x)
        g2 = model.aggregates(mu2, x)
        L = lambda_moment(mu1, c.q0)
        dist = lambda_moment(JointMeasure(grid, m, a1 - a2), c.q0)

        def context(i, _j=j, _x=x, _p=p, _m=m, _a1=a1, _a2=a2):
            return {"measure": _j, "x": float(_x[i]), "p": float(_p[i]),
                    "m": _m.tolist(), "alpha": _a1.tolist(), "alpha2": _a2.tolist()}

        H = model.H(x, p, g1)
        Hp = model.Hp(x, p, g1)
        dp = 1e-2
        sd = model.H(x, p + dp, g1) - 2.0 * H + model.H(x, p - dp, g1)
        rec.record("convexity", -sd, 0.0, context, slack=1e-9 * (1.0 + np.abs(H)))
        fp1 = C0 * (1.0 + np.abs(p) ** (q - 1.0)) + lam0 * L
        rec.record("FP1", np.abs(Hp), fp1, context, slack=1e-10 * (1.0 + fp1))
        fp2 = lam0 * dist
        rec.record("FP2", np.abs(Hp - model.Hp(x, p, g2)), fp2, context, slack=1e-10 * (1.0 + fp2))
        H0 = model.H(x, 0.0 * p, g1)
        b1 = C + lam2 * L**qp
        rec.record("B1", np.abs(H0), b1, context, slack=1e-10 * (1.0 + b1))
        gp = model.aggregates(mu1, x + fd_step)
        gm = model.aggregates(mu1, x - fd_step)
        Hx = (model.H(x + fd_step, p, gp) - model.H(x - fd_step, p, gm)) / (2.0 * fd_step)
        b2 = C * (1.0 + np.abs(p) ** q + L**qp)
        rec.record("B2", np.abs(Hx), b2, context, slack=1e-6 * (1.0 + b2))
        b3 = (np.abs(p) ** q - lam1 * L**qp) / C - C
        rec.record("B3", -(Hp * p - H), -b3, context, slack=1e-10 * (1.0 + np.abs(b3)))
        if isinstance(model, CrowdMotion):
            rec.record("V_bound", np.abs(g1.V), L, context, slack=1e-12 * (1.0 + L))
        elif isinstance(model, Flocking):
            rec.record("V_bound", np.abs(g1.A), model.kernel.max * lambda_moment(mu1, 1.0),
                       context, slack=1e-12 * (1.0 + L))
        done += count
        j += 1
    return AssumptionReport(model=model.name, seed=seed, checks=rec.checks)


# crowd motion with general exponents -------------------------------------------

def _phi(z, r):
    """``|z|^{r-1} sign z`` (derivative of ``|z|^r / r``)."""
    return np.sign(z) * np.abs(z) ** (r - 1.0)


def lagrangian_tilde(theta, lambda_tilde, a, b, alpha, V):
    ap, bp = conjugate(a), conjugate(b)
    return (theta / ap * np.abs(alpha - lambda_tilde * V) ** ap
            + (1.0 - theta) / bp * np.abs(alpha) ** bp)


def optimality_residual(theta, lambda_tilde, a, b, p, V, alpha) -> float:
    """``p + D_alpha L(alpha, V)``: zero at the optimal control."""
    ap, bp = conjugate(a), conjugate(b)
    return float(p + theta * _phi(alpha - lambda_tilde * V, ap) + (1.0 - theta) * _phi(alpha, bp))


def _check_exponents(theta, lambda_tilde, a, b):
    if a < 2.0 or b < 2.0:
        raise DomainError("exponents a, b must be at least 2")
    if not 0.0 <= theta <= 1.0:
        raise DomainError("theta must lie in [0, 1]")
    if not -1.0 < lambda_tilde < 1.0:
        raise DomainError("lambda_tilde must lie in (-1, 1)")


def optimal_control(theta, lambda_tilde, a, b, p, V, tol=1e-10, max_iter=200) -> float:
    """Minimizer of ``L(alpha, V) + alpha p`` for scalar ``p`` and ``V``.

    Runs the weighted fixed point
    ``alpha = (-p + lt theta w_a V) / (theta w_a + (1-theta) w_b)`` with
    ``w_a = |alpha - lt V|^{a'-2}``, ``w_b = |alpha|^{b'-2}``, damped by one
    half, and falls back to bracketing the strictly increasing first-order
    condition when the weights degenerate or the iteration stalls.
    """
    _check_exponents(theta, lambda_tilde, a, b)
    ap, bp = conjugate(a), conjugate(b)
    lV = lambda_tilde * V
    if theta == 1.0:
        return float(lV - _phi(p, a))
    if theta == 0.0:
        return float(-_phi(p, b))
    scale = 1.0
    alpha = lV * theta - p
    for _ in range(max_iter):
        da, db = abs(alpha - lV), abs(alpha)
        if da == 0.0 or db == 0.0:
            break
        wa, wb = da ** (ap - 2.0), db ** (bp - 2.0)
        new = (-p + theta * wa * lV) / (theta * wa + (1.0 - theta) * wb)
        new = 0.5 * (alpha + new)
        if not math.isfinite(new):
            break
        alpha = new
        if abs(optimality_residual(theta, lambda_tilde, a, b, p, V, alpha)) <= tol * scale:
            return float(alpha)
    F = lambda z: optimality_residual(theta, lambda_tilde, a, b, p, V, z)
    lo, hi = -1.0 - abs(lV) - abs(p) ** (a - 1.0) - abs(p) ** (b - 1.0), 0.0
    hi = -lo
    while F(lo) > 0:
        lo *= 2.0
    while F(hi) < 0:
        hi *= 2.0
    alpha = brentq(F, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(F(alpha)) <= tol * scale:
        return float(alpha)
    # Near alpha = 0 or alpha = lt V with exponents below 2 the condition has
    # infinite slope, so no float meets the residual tolerance; accept a root
    # bracketed between adjacent floats.
    below, above = np.nextafter(alpha, -np.inf), np.nextafter(alpha, np.inf)
    if F(below) <= 0.0 <= F(above):
        return float(alpha)
    raise NoConvergence(f"optimal control residual {F(alpha):.3g} above tolerance")


def optimal_control_bruteforce(theta, lambda_tilde, a, b, p, V, R=None, n=200_001, rounds=4):
    """Dense grid minimization of ``L(alpha, V) + alpha p`` with zooming."""
    if R is None:
        R = 2.0 + abs(V) + abs(p) ** (a - 1.0) + abs(p) ** (b - 1.0)
    lo, hi = -R, R
    for _ in range(rounds):
        grid = np.linspace(lo, hi, n)
        vals = lagrangian_tilde(theta, lambda_tilde, a, b, grid, V) + grid * p
        i = int(np.argmin(vals))
        step = grid[1] - grid[0]
        lo, hi = grid[i] - 4 * step, grid[i] + 4 * step
    return float(grid[i])


def h_tilde(theta, lambda_tilde, a, b, p, V) -> float:
    """Legendre transform ``-alpha* p - L(alpha*, V)`` at the optimal control."""
    alpha = optimal_control(theta, lambda_tilde, a, b, p, V)
    return float(-alpha * p - lagrangian_tilde(theta, lambda_tilde, a, b, alpha, V))


def h_tilde_rest_coefficient(theta, lambda_tilde, a) -> float:
    """Coefficient c in ``H(0, V) = c |V|^{a'}`` when ``a = b``."""
    ap = conjugate(a)
    num = theta * (1 - theta) ** a + (1 - theta) * theta**a
    den = ((1 - theta) ** (a - 1) + theta ** (a - 1)) ** ap
    return -(abs(lambda_tilde) ** ap / ap) * num / den


def rest_control_gain(theta, lambda_tilde, a) -> float:
    """``alpha / V`` at ``p = 0`` when ``a = b``."""
    t1 = theta ** (a - 1)
    return lambda_tilde * t1 / (t1 + (1 - theta) ** (a - 1))


def crowd_existence_region(theta, lambda_tilde, a, b, q0, kernel_constant=False,
                           short_time=False):
    """Existence cases met by the crowd-motion parameters, as letters a-e.

    Case ``b`` (small coupling, equal exponents) is decided by the
    small-parameter inequality with ``lambda1 = 0``, ``C0 = 1``,
    ``lambda2 = |H(0, V)| / |V|^{a'}`` and ``lambda0`` the rest-control gain.
    """
    _check_exponents(theta, lambda_tilde, a, b)
    q = min(a, b)
    qp = conjugate(q)
    cases = []
    if q0 <= qp and a != b:
        cases.append("a")
    if q0 <= qp and a == b:
        lam2 = abs(h_tilde_rest_coefficient(theta, lambda_tilde, a))
        lam0 = abs(rest_control_gain(theta, lambda_tilde, a))
        if lam0 < 1.0 and lam2 < (1.0 - lam0) ** qp:
            cases.append("b")
    if theta == 1.0:
        cases.append("c")
    if kernel_constant:
        cases.append("d")
    if short_time:
        cases.append("e")
    return cases


# matrix positivity ------------------------------------------------------------

def _h4_check(r, s, k, chi):
    r, s, k, chi = (np.asarray(v, dtype=float) for v in (r, s, k, chi))
    if np.any((r <= 0) | (r > 1)) or np.any(s < 1) or np.any(k <= 0) or np.any(
            (chi < 0) | (chi >= 2 * math.pi)):
        raise DomainError("need 0 < r <= 1, s >= 1, k > 0, 0 <= chi < 2 pi")
    return r, s, k, chi


def h4_reduced_matrix(r, s, k, chi) -> np.ndarray:
    """The 2x2 matrix similar to ``I + k(BC+CB) + k^2 B C^2 B`` in closed form."""
    c, sn = math.cos(chi), math.sin(chi)
    off = -k * (s - 1) * (1 + r + k * r * (1 + s)) * c * sn
    return np.array([[c * c * (1 + k) ** 2 + sn * sn * (1 + k * s) ** 2, off],
                     [off, c * c * (1 + k * r * s) ** 2 + sn * sn * (1 + k * r) ** 2]])


def h4_min_eigenvalue(r, s, k, chi):
    """Smaller eigenvalue from the closed-form trace and determinant
    (vectorized over its arguments)."""
    r, s, k, chi = _h4_check(r, s, k, chi)
    c2, s2 = np.cos(chi) ** 2, np.sin(chi) ** 2
    tr = (c2 * (1 + k) ** 2 + s2 * (1 + k * r) ** 2
          + c2 * (1 + k * r * s) ** 2 + s2 * (1 + k * s) ** 2)
    det = ((1 + k) * (1 + k * r * s) * c2 + (1 + k * r) * (1 + k * s) * s2) ** 2
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    # 2 det / (tr + disc) avoids cancellation in (tr - disc) / 2
    out = 2.0 * det / (tr + disc)
    return float(out) if out.ndim == 0 else out


def h4_min_eigenvalue_direct(r, s, k, chi):
    """Smaller eigenvalue of ``I + k(BC+CB) + k^2 B C^2 B`` built explicitly."""
    r, s, k, chi = _h4_check(r, s, k, chi)
    r, s, k, chi = np.broadcast_arrays(r, s, k, chi)
    c, sn = np.cos(chi), np.sin(chi)
    U = np.empty(c.shape + (2, 2))
    U[..., 0, 0], U[..., 0, 1], U[..., 1, 0], U[..., 1, 1] = c, sn, -sn, c
    D = np.zeros(c.shape + (2, 2))
    D[..., 0, 0], D[..., 1, 1] = 1.0, r
    B = U @ D @ np.swapaxes(U, -1, -2)
    Cm = np.zeros(c.shape + (2, 2))
    Cm[..., 0, 0], Cm[..., 1, 1] = 1.0, s
    kk = k[..., None, None]
    M = np.eye(2) + kk * (B @ Cm + Cm @ B) + kk**2 * (B @ Cm @ Cm @ B)
    out = np.linalg.eigvalsh(M)[..., 0]
    return float(out) if out.ndim == 0 else out


def h4_sweep(n_tuples: int = 100_000, seed: int = 0, k_max: float = 10.0, s_max: float = 10.0):
    """Random sweep; returns ``(min eigenvalue, max relative path disagreement)``."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.0, 1.0, n_tuples)
    r = np.where(r == 0.0, 1.0, r)
    s = rng.uniform(1.0, s_max, n_tuples)
    k = rng.uniform(0.0, k_max, n_tuples)
    k = np.where(k == 0.0, k_max, k)
    chi = rng.uniform(0.0, 2 * math.pi, n_tuples)
    closed = h4_min_eigenvalue(r, s, k, chi)
    direct = h4_min_eigenvalue_direct(r, s, k, chi)
    rel = np.abs(closed - direct) / np.abs(direct)
    return float(np.min(closed)), float(np.max(rel))
