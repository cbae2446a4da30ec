"""Per-time-slice fixed point for the joint state-control measure.

Given the gradient ``p`` of the value function and the density ``m`` on one
time slice, the feedback control solves

    alpha = T_M(-H_p(x, p, (Id, alpha)#m)),

which is a contraction with constant ``lambda0`` under the model's
structural constants.  :func:`solve_mu` runs the Banach iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import NoConvergence
from .grid import TorusGrid
from .models import (MASS_FLOOR, ImpactAggregates, JointMeasure, LinearDemand, LocalMeanControl,
                     MeanControl, Model, NegCorrResources, PriceImpact)


def truncate_TM(v, M: float):
    """Radial projection onto the ball of radius ``M`` (identity for ``M = inf``)."""
    if M == math.inf:
        return v
    if not M > 0:
        raise ValueError("truncation radius must be positive")
    # in one dimension the radial projection is a clip, which keeps |v| == M exact
    return np.clip(v, -M, M)


def lambda_moment(mu: JointMeasure, q_tilde: float) -> float:
    """``L^q(m)`` norm of the control; ``q = inf`` takes the max over nodes
    whose mass exceeds a floating-point floor."""
    a = np.abs(mu.alpha)
    if q_tilde == math.inf:
        support = mu.m > MASS_FLOOR
        return float(np.max(a[support])) if np.any(support) else 0.0
    if q_tilde < 1:
        raise ValueError("moment exponent must be >= 1")
    amax = float(np.max(a)) if a.size else 0.0
    if amax == 0.0:
        return 0.0
    # scale out the max to avoid overflow for large exponents
    s = np.dot((a / amax) ** q_tilde, mu.weights)
    return amax * float(s) ** (1.0 / q_tilde)


@dataclass
class MuSolveReport:
    iterations: int = 0
    final_residual: float = math.inf
    converged: bool = False
    contraction_estimate: Optional[float] = None
    residuals: List[float] = field(default_factory=list)

    @property
    def ratios(self) -> List[float]:
        r = self.residuals
        return [r[k] / r[k - 1] for k in range(1, len(r)) if r[k - 1] > _ratio_floor(r)]


def _ratio_floor(residuals) -> float:
    # ratios of residuals at rounding level are noise
    return 1e-13 * max(1.0, residuals[0] if residuals else 1.0)


def solve_mu(model: Model, p, m, M: float = math.inf, tol: float = 1e-12,
             max_iter: int = 200, alpha0=None):
    """Banach iteration for the slice control; returns ``(alpha, report)``.

    Raises :class:`NoConvergence` only when the iteration budget is exhausted
    and the observed contraction ratio reached 1; otherwise an unconverged
    report is returned alongside the last iterate.
    """
    grid: TorusGrid = model.grid
    x = grid.nodes
    p = np.broadcast_to(np.asarray(p, dtype=float), (grid.n,))
    m = np.asarray(m, dtype=float)
    op = model.aggregate_operator(m)
    alpha = np.zeros(grid.n) if alpha0 is None else np.array(alpha0, dtype=float)
    report = MuSolveReport()
    for k in range(1, max_iter + 1):
        new = truncate_TM(-model.Hp(x, p, op(alpha)), M)
        new = np.broadcast_to(new, (grid.n,)).astype(float)
        res = float(np.max(np.abs(new - alpha)))
        report.residuals.append(res)
        alpha = new
        report.iterations = k
        report.final_residual = res
        if res <= tol:
            report.converged = True
            break
    ratios = report.ratios
    if ratios:
        report.contraction_estimate = max(ratios)
    if not report.converged and (report.contraction_estimate or 0.0) >= 1.0:
        raise NoConvergence(
            f"slice fixed point did not contract (ratio {report.contraction_estimate:.3g})",
            report)
    return alpha, report


def closed_form_alpha(model: Model, p, m) -> np.ndarray:
    """Untruncated fixed point for models whose aggregate enters H_p linearly."""
    grid = model.grid
    x = grid.nodes
    p = np.broadcast_to(np.asarray(p, dtype=float), (grid.n,))
    m = np.asarray(m, dtype=float)
    if isinstance(model, LinearDemand):
        agg = MeanControl(model.closed_form_mean(p, m))
    elif isinstance(model, NegCorrResources):
        agg = LocalMeanControl(model.closed_form_mean(p, m), m)
    elif isinstance(model, PriceImpact):
        agg = ImpactAggregates(float("nan"), model.closed_form_l2(p, m))
    else:
        raise TypeError(f"no closed form for {type(model).__name__}")
    return -np.broadcast_to(model.Hp(x, p, agg), (grid.n,)).astype(float)
