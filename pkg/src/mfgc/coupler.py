"""Outer damped Picard iteration coupling the forward and backward sweeps.

One outer iteration: forward sweep with the current value function (density
and slice controls), backward sweep with the resulting measures and terminal
cost, then ``u <- (1 - omega) u + omega u_new``.  Its fixed points are the
discrete solutions of the coupled system with truncation radius ``M``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .grid import TimeGrid, gradient_centered, laplacian
from .models import JointMeasure, Model
from .mufix import lambda_moment, truncate_TM
from .pde import (ForwardSweep, SchemeConfig, flux_divergence, solve_fpk_forward,
                  solve_hjb_backward)


@dataclass(frozen=True)
class SolverConfig:
    M: float = math.inf
    omega: float = 0.5
    tol_outer: float = 1e-8
    max_outer: int = 200
    tol_mu: float = 1e-12
    max_mu: int = 200
    scheme: SchemeConfig = SchemeConfig()
    continuation: Optional[Sequence[float]] = None
    divergence_factor: float = 10.0
    divergence_window: int = 5

    def __post_init__(self):
        if not 0.0 < self.omega <= 1.0:
            raise ValueError(f"omega must lie in (0, 1], got {self.omega!r}")
        if not self.tol_outer > 0 or not self.tol_mu > 0:
            raise ValueError("tolerances must be positive")
        if not self.M > 0:
            raise ValueError("truncation radius M must be positive")
        if int(self.max_outer) < 1 or int(self.max_mu) < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.continuation is not None:
            sched = list(self.continuation)
            if not sched or any(not s > 0 for s in sched) or any(
                    b <= a for a, b in zip(sched, sched[1:])):
                raise ValueError("continuation schedule must be a nonempty increasing list of radii")


@dataclass
class SolveResult:
    model: Model
    tgrid: TimeGrid
    config: SolverConfig
    u: np.ndarray
    m: np.ndarray
    alpha: np.ndarray
    residual_history: List[float]
    outer_iterations: int
    converged: bool
    status: str = "converged"
    M: float = math.inf
    truncation_inactive: Optional[bool] = None
    system_residuals: dict = field(default_factory=dict)
    mu_contraction_max: Optional[float] = None
    mu_iterations_max: int = 0
    diagnostics: object = None

    @property
    def grid(self):
        return self.model.grid

    def measures(self) -> List[JointMeasure]:
        return [JointMeasure(self.grid, mk, ak) for mk, ak in zip(self.m, self.alpha)]

    @property
    def m0(self) -> np.ndarray:
        return self.m[0]


def _forward(model, u, tgrid, m0, config, M) -> ForwardSweep:
    return solve_fpk_forward(u, model, config.scheme, tgrid, m0, M, config.tol_mu, config.max_mu)


def outer_step(model: Model, u, tgrid: TimeGrid, m0, config: SolverConfig, M: float):
    """One undamped outer map evaluation: returns ``(sweep, u_new)``."""
    sweep = _forward(model, u, tgrid, m0, config, M)
    u_new = solve_hjb_backward(sweep.measures(model.grid), sweep.m[-1], model, config.scheme, tgrid)
    return sweep, u_new


def system_residuals(model: Model, u, sweep: ForwardSweep, tgrid: TimeGrid,
                     scheme: SchemeConfig, M: float) -> dict:
    """Sup-norm residuals of the continuous equations on the discrete solution.

    The HJB and Fokker-Planck residuals use a time-centered stencil with
    centered space differences, so they measure the truncation error of the
    first-order scheme.  The Fokker-Planck residual is measured in a negative
    norm (sup of its mean-free spatial primitive): upwinding a drift that
    changes sign leaves an O(1) pointwise defect at the sign change whose
    flux, and hence primitive, is O(h).  The slice residual is the
    fixed-point defect of the controls.
    """
    grid = model.grid
    x = grid.nodes
    dt, nu = tgrid.dt, scheme.nu
    m, alpha = sweep.m, sweep.alpha
    H = np.empty_like(u)
    mu_res = 0.0
    for k in range(tgrid.nt + 1):
        agg = model.aggregates(JointMeasure(grid, m[k], alpha[k]))
        p = gradient_centered(u[k], grid)
        H[k] = model.H(x, p, agg)
        mu_res = max(mu_res, float(np.max(np.abs(alpha[k] - truncate_TM(-model.Hp(x, p, agg), M)))))
    lap_u = np.array([laplacian(r, grid) for r in u])
    lap_m = np.array([laplacian(r, grid) for r in m])
    bm = alpha * m
    div_bm = (np.roll(bm, -1, axis=1) - np.roll(bm, 1, axis=1)) / (2.0 * grid.h)
    hjb = -(u[1:] - u[:-1]) / dt - nu * 0.5 * (lap_u[1:] + lap_u[:-1]) + 0.5 * (H[1:] + H[:-1])
    fpk = (m[1:] - m[:-1]) / dt - nu * 0.5 * (lap_m[1:] + lap_m[:-1]) + 0.5 * (div_bm[1:] + div_bm[:-1])
    prim = grid.h * np.cumsum(fpk, axis=1)
    prim -= prim.mean(axis=1, keepdims=True)
    return {"hjb": float(np.max(np.abs(hjb))), "fpk": float(np.max(np.abs(prim))), "mu": mu_res}


def solve(model: Model, tgrid: TimeGrid, m0, config: SolverConfig = SolverConfig(),
          u_init=None, M: Optional[float] = None, diagnose: bool = True) -> SolveResult:
    """Damped Picard iteration from ``u_init`` (zero by default).

    Non-convergence (iteration cap or detected divergence) is reported through
    ``converged = False`` and ``status``; the returned trajectories are those
    of the iterate with the smallest residual.
    """
    grid = model.grid
    M = config.M if M is None else M
    m0 = np.asarray(m0, dtype=float)
    shape = (tgrid.nt + 1, grid.n)
    u = np.zeros(shape) if u_init is None else np.array(np.broadcast_to(u_init, shape), dtype=float)
    history: List[float] = []
    m_prev = None
    best = None
    status = "max_outer"
    converged = False
    k = 0
    omega = config.omega
    for k in range(1, config.max_outer + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                sweep, u_new = outer_step(model, u, tgrid, m0, config, M)
        except ValueError:
            # a sweep overflowed (non-finite values reached the linear solver)
            status = "diverged"
            break
        u_next = (1.0 - omega) * u + omega * u_new
        res = float(np.max(np.abs(u_next - u)))
        if m_prev is not None:
            res = max(res, float(np.max(np.abs(sweep.m - m_prev))))
        history.append(res)
        m_prev = sweep.m
        u = u_next
        if best is None or res <= best[0]:
            best = (res, u)
        if res <= config.tol_outer:
            converged, status = True, "converged"
            break
        w = config.divergence_window
        if len(history) > w and history[-1] > config.divergence_factor * history[-1 - w]:
            status = "diverged"
            break
        if not np.all(np.isfinite(u)):
            status = "diverged"
            break
    if not converged and best is not None:
        u = best[1]
    # consistency pass: controls and density recomputed from the returned u
    sweep = _forward(model, u, tgrid, m0, config, M)
    result = SolveResult(
        model=model, tgrid=tgrid, config=config, u=u, m=sweep.m, alpha=sweep.alpha,
        residual_history=history, outer_iterations=k, converged=converged, status=status, M=M,
        mu_contraction_max=max((r.contraction_estimate for r in sweep.reports
                                if r.contraction_estimate is not None), default=None),
        mu_iterations_max=max(r.iterations for r in sweep.reports))
    result.truncation_inactive = truncation_inactive(result)
    result.system_residuals = system_residuals(model, u, sweep, tgrid, config.scheme, M)
    if diagnose:
        from .diagnostics import run_diagnostics
        result.diagnostics = run_diagnostics(result)
    return result


def truncation_inactive(result: SolveResult) -> bool:
    """True when every slice control stays strictly inside the truncation ball."""
    if result.M == math.inf:
        return True
    return all(lambda_moment(mu, math.inf) < result.M for mu in result.measures())


def solve_with_continuation(model: Model, tgrid: TimeGrid, m0,
                            config: SolverConfig = SolverConfig(), u_init=None,
                            diagnose: bool = True) -> SolveResult:
    """Solve along the increasing radius schedule, warm-starting each stage."""
    schedule = list(config.continuation) if config.continuation else [config.M]
    u = u_init
    result = None
    for i, M in enumerate(schedule):
        last = i == len(schedule) - 1
        result = solve(model, tgrid, m0, config, u_init=u, M=M, diagnose=diagnose and last)
        u = result.u
    return result
