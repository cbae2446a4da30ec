"""A priori estimates and identities checked on a computed solution.

Every check is a pure function of a :class:`~mfgc.coupler.SolveResult` (and
its model) and returns the measured quantity; margins are ``bound - value``
so that a negative margin means the estimate is violated.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import MissingConstants
from .grid import gradient_centered
from .models import JointMeasure, Model, StructuralConstants
from .mufix import lambda_moment, solve_mu

MASS_TOL = 1e-12
THETA = 0.5


@dataclass
class DiagnosticsReport:
    mass_max_dev: float
    m_min: float
    energy_identity_residual: float
    energy_lhs: float
    energy_rhs: float
    lambda_bound_margin: float
    grad_value_ratio: float
    max_principle_margin: Optional[float]
    small_param_ok: Optional[bool]
    small_param_lhs: Optional[float]
    small_param_rhs: Optional[float]
    energy_integral: Optional[float] = None
    converged: bool = True
    notes: list = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return (self.converged
                and self.mass_max_dev <= MASS_TOL
                and self.m_min > 0.0
                and self.lambda_bound_margin >= 0.0
                and self.max_principle_margin is not None
                and self.max_principle_margin >= 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verified"] = self.verified
        return d


def check_mass_and_positivity(result):
    h = result.grid.h
    mass = h * np.sum(result.m, axis=1)
    return float(np.max(np.abs(mass - 1.0))), float(np.min(result.m))


def _trapezoid(values, dt) -> float:
    v = np.asarray(values, dtype=float)
    return float(dt * (v.sum() - 0.5 * (v[0] + v[-1])))


def energy_identity(result, model: Optional[Model] = None):
    """Both sides of ``int int (H_p . grad u - H) dm dt = int u(0) dm0 - int g dm(T)``.

    Space integrals use the rectangle rule with the centered gradient and
    each slice's measure; the time integral uses the trapezoid rule.
    """
    model = model or result.model
    grid = result.grid
    x = grid.nodes
    slices = []
    for k, mu in enumerate(result.measures()):
        agg = model.aggregates(mu)
        p = gradient_centered(result.u[k], grid)
        slices.append(np.dot(model.Hp(x, p, agg) * p - model.H(x, p, agg), mu.weights))
    lhs = _trapezoid(slices, result.tgrid.dt)
    m0, mT = result.m[0], result.m[-1]
    rhs = grid.h * (np.dot(result.u[0], m0) - np.dot(model.terminal_cost(mT), mT))
    return float(lhs), float(rhs)


def energy_identity_residual(result, model: Optional[Model] = None) -> float:
    lhs, rhs = energy_identity(result, model)
    return abs(lhs - rhs)


def lambda_bound_rhs(constants: StructuralConstants, p, m, grid, q_tilde=math.inf) -> float:
    """``C0/(1-lambda0) (1 + || |p|^{q-1} ||_{L^r(m)})`` with ``r = max(q0, q_tilde)``."""
    r = max(constants.q0, q_tilde)
    pw = np.abs(p) ** (constants.q - 1.0)
    norm = lambda_moment(JointMeasure(grid, m, pw), r)
    return constants.C0 / (1.0 - constants.lambda0) * (1.0 + norm)


def check_lambda_bound(result, model: Optional[Model] = None, q_tilde=math.inf) -> float:
    model = model or result.model
    c = model.constants()
    grid = result.grid
    margin = math.inf
    for k, mu in enumerate(result.measures()):
        p = gradient_centered(result.u[k], grid)
        rhs = lambda_bound_rhs(c, p, mu.m, grid, q_tilde)
        margin = min(margin, rhs - lambda_moment(mu, q_tilde))
    return float(margin)


def max_principle_bound(constants: StructuralConstants, terminal_bound: float, T: float,
                        grad_q_integral: float, theta: float = THETA) -> float:
    """Bound on ``||u||_inf``: terminal bound plus T times the bound of
    ``|H(x,0,mu)|``, with the moment term controlled by the gradient through
    ``(1+a)^{q'} <= theta^{1-q'} + (1-theta)^{1-q'} a^{q'}``."""
    lam2 = constants.require_lambda2()
    qp = constants.q_prime
    coef = lam2 * constants.C0**qp / (1.0 - constants.lambda0) ** qp
    return (terminal_bound + constants.growth * T
            + coef * (theta ** (1.0 - qp) * T + (1.0 - theta) ** (1.0 - qp) * grad_q_integral))


def check_max_principle(result, model: Optional[Model] = None,
                        constants: Optional[StructuralConstants] = None) -> float:
    """``bound - ||u||_inf``; the gradient enters as ``int_0^T ||grad u(t)||_inf^q dt``."""
    model = model or result.model
    c = constants or model.constants()
    grid = result.grid
    gsup = np.array([np.max(np.abs(gradient_centered(uk, grid))) for uk in result.u])
    gq = _trapezoid(gsup**c.q, result.tgrid.dt)
    bound = max_principle_bound(c, model.terminal_bound(), result.tgrid.T, gq)
    return float(bound - np.max(np.abs(result.u)))


def small_param_check(model_or_constants: Union[Model, StructuralConstants]):
    """``(lhs < rhs, lhs, rhs)`` for ``lambda1 + C lambda2 < (1-lambda0)^{q'} / C0^{q'}``,
    where C is the growth constant of ``H(x, 0, mu)`` (``C0`` unless declared)."""
    c = model_or_constants
    if isinstance(c, Model):
        c = c.constants()
    lam2 = c.require_lambda2()
    lhs = c.lambda1 + c.growth * lam2
    rhs = c.coercivity_bound()
    return lhs < rhs, float(lhs), float(rhs)


def grad_value_ratio(result) -> float:
    grid = result.grid
    gsup = np.array([np.max(np.abs(gradient_centered(uk, grid))) for uk in result.u])
    usup = np.max(np.abs(result.u), axis=1)
    tail_max = np.maximum.accumulate(usup[::-1])[::-1]
    return float(np.max(gsup / (1.0 + tail_max)))


def energy_integral(result, model: Optional[Model] = None) -> float:
    """``int_0^T int |grad u|^q dm dt``."""
    model = model or result.model
    q = model.constants().q
    grid = result.grid
    vals = [grid.h * np.dot(np.abs(gradient_centered(uk, grid)) ** q, mk)
            for uk, mk in zip(result.u, result.m)]
    return _trapezoid(vals, result.tgrid.dt)


def mu_stability_probe(model: Model, p1, m1, p2, m2, M=math.inf, tol=1e-13, max_iter=500):
    """``(||alpha1 - alpha2||_inf, ||p1-p2||^b + ||m1-m2||^b)`` with ``b = beta0``."""
    a1, _ = solve_mu(model, p1, m1, M, tol, max_iter)
    a2, _ = solve_mu(model, p2, m2, M, tol, max_iter)
    beta = model.constants().beta0
    dp = float(np.max(np.abs(np.asarray(p1, float) - np.asarray(p2, float))))
    dm = float(np.max(np.abs(np.asarray(m1, float) - np.asarray(m2, float))))
    return float(np.max(np.abs(a1 - a2))), dp**beta + dm**beta


def run_diagnostics(result, model: Optional[Model] = None) -> DiagnosticsReport:
    model = model or result.model
    notes = []
    mass_dev, m_min = check_mass_and_positivity(result)
    lhs, rhs = energy_identity(result, model)
    try:
        c = model.constants()
    except MissingConstants as exc:
        c = None
        notes.append(str(exc))
    if c is not None:
        lam_margin = check_lambda_bound(result, model)
        try:
            mp_margin = check_max_principle(result, model, c)
            sp_ok, sp_lhs, sp_rhs = small_param_check(c)
        except MissingConstants as exc:
            mp_margin, sp_ok, sp_lhs, sp_rhs = None, None, None, None
            notes.append(str(exc))
        e_int = energy_integral(result, model) if c.q0 <= c.q_prime else None
        notes.extend(c.violations())
    else:
        lam_margin, mp_margin, sp_ok, sp_lhs, sp_rhs, e_int = -math.inf, None, None, None, None, None
    return DiagnosticsReport(
        mass_max_dev=mass_dev, m_min=m_min, energy_identity_residual=abs(lhs - rhs),
        energy_lhs=lhs, energy_rhs=rhs, lambda_bound_margin=lam_margin,
        grad_value_ratio=grad_value_ratio(result), max_principle_margin=mp_margin,
        small_param_ok=sp_ok, small_param_lhs=sp_lhs, small_param_rhs=sp_rhs,
        energy_integral=e_int, converged=bool(result.converged), notes=notes)
