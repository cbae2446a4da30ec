"""Time steps and sweeps for the backward HJB and forward Fokker-Planck equations.

Both equations use implicit diffusion (one cyclic tridiagonal solve per step)
and explicit first-order terms.  The Fokker-Planck step is written in flux
form with upwind face fluxes, so mass is conserved to rounding and the
density stays positive under the CFL condition ``max|b| dt / h <= 1``.

Trajectories are arrays of shape ``(nt + 1, n)`` indexed by time level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import CflViolation
from .grid import TimeGrid, TorusGrid, gradient_backward, gradient_centered, gradient_forward, heat_operator
from .models import JointMeasure, Model
from .mufix import MuSolveReport, solve_mu


@dataclass(frozen=True)
class SchemeConfig:
    """``advection`` selects the HJB gradient: ``centered`` (default) or
    ``upwind`` along the optimal drift.  Fokker-Planck fluxes are always upwind."""

    nu: float = 0.1
    advection: str = "centered"
    cfl_guard: bool = True

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("diffusion nu must be positive")
        if self.advection not in ("centered", "upwind"):
            raise ValueError(f"advection must be 'centered' or 'upwind', got {self.advection!r}")


def hjb_gradient(model: Model, u, agg, scheme: SchemeConfig) -> np.ndarray:
    grid = model.grid
    pc = gradient_centered(u, grid)
    if scheme.advection == "centered":
        return pc
    drift = -np.broadcast_to(model.Hp(grid.nodes, pc, agg), pc.shape)
    return np.where(drift > 0, gradient_forward(u, grid), gradient_backward(u, grid))


def hjb_step_backward(u_next, agg, model: Model, scheme: SchemeConfig, dt: float) -> np.ndarray:
    """One step ``(I - nu dt Lap) u = u_next - dt H(x, D u_next, mu)``."""
    grid = model.grid
    u_next = np.asarray(u_next, dtype=float)
    p = hjb_gradient(model, u_next, agg, scheme)
    rhs = u_next - dt * model.H(grid.nodes, p, agg)
    return heat_operator(scheme.nu, dt, grid).solve(rhs)


def upwind_flux(m, b) -> np.ndarray:
    """Face fluxes ``F_{i+1/2} = b_i^+ m_i + b_{i+1}^- m_{i+1}``."""
    m = np.asarray(m, dtype=float)
    b = np.broadcast_to(np.asarray(b, dtype=float), m.shape)
    return np.maximum(b, 0.0) * m + np.minimum(np.roll(b, -1), 0.0) * np.roll(m, -1)


def flux_divergence(F, grid: TorusGrid) -> np.ndarray:
    return (F - np.roll(F, 1)) / grid.h


def cfl_number(b, grid: TorusGrid, dt: float) -> float:
    return float(np.max(np.abs(b))) * dt / grid.h


def fpk_step_forward(m_now, drift, scheme: SchemeConfig, dt: float, grid: TorusGrid) -> np.ndarray:
    """One step ``(I - nu dt Lap) m_new = m_now - dt div_h F(b m_now)``."""
    m_now = np.asarray(m_now, dtype=float)
    if scheme.cfl_guard:
        c = cfl_number(drift, grid, dt)
        if c > 1.0:
            raise CflViolation(f"CFL number {c:.4g} exceeds 1; refine dt or truncate the drift")
    rhs = m_now - dt * flux_divergence(upwind_flux(m_now, drift), grid)
    return heat_operator(scheme.nu, dt, grid).solve(rhs)


def solve_hjb_backward(mu_traj: Sequence[JointMeasure], m_T, model: Model,
                       scheme: SchemeConfig, tgrid: TimeGrid) -> np.ndarray:
    """March from ``u(T) = g(., m_T)`` down to t = 0 with frozen slice measures.

    The step from level n+1 to n evaluates the Hamiltonian with the measure
    of level n+1, the known level of the explicit term.
    """
    if len(mu_traj) != tgrid.nt + 1:
        raise ValueError("measure trajectory must have nt + 1 slices")
    grid = model.grid
    u = np.empty((tgrid.nt + 1, grid.n))
    u[-1] = model.terminal_cost(m_T)
    for k in range(tgrid.nt - 1, -1, -1):
        agg = model.aggregates(mu_traj[k + 1])
        u[k] = hjb_step_backward(u[k + 1], agg, model, scheme, tgrid.dt)
    return u


@dataclass
class ForwardSweep:
    m: np.ndarray
    alpha: np.ndarray
    reports: List[MuSolveReport]

    def measures(self, grid: TorusGrid) -> List[JointMeasure]:
        return [JointMeasure(grid, mk, ak) for mk, ak in zip(self.m, self.alpha)]


def solve_fpk_forward(u_traj, model: Model, scheme: SchemeConfig, tgrid: TimeGrid, m0,
                      M: float = math.inf, tol_mu: float = 1e-12, max_mu: int = 200,
                      warm_start: bool = True) -> ForwardSweep:
    """March the density forward from ``m0``.

    On each slice the control solves the slice fixed point for the centered
    gradient of ``u``; it is both the emitted measure's control and the drift.
    With ``warm_start`` the slice iteration starts from the previous slice's
    control instead of zero (same fixed point, fewer iterations).
    """
    grid = model.grid
    nt = tgrid.nt
    m = np.empty((nt + 1, grid.n))
    alpha = np.empty((nt + 1, grid.n))
    reports = []
    m[0] = np.asarray(m0, dtype=float)
    prev = None
    for k in range(nt + 1):
        p = gradient_centered(u_traj[k], grid)
        a, rep = solve_mu(model, p, m[k], M, tol_mu, max_mu, alpha0=prev)
        alpha[k] = a
        reports.append(rep)
        if warm_start:
            prev = a
        if k < nt:
            m[k + 1] = fpk_step_forward(m[k], a, scheme, tgrid.dt, grid)
    return ForwardSweep(m, alpha, reports)
