"""Hamiltonians of the shipped mean field games of controls.

Every model exposes the same small surface:

* ``aggregates(mu, x=None)`` summarizes the joint measure ``mu`` into the
  quantities the Hamiltonian needs at the points ``x`` (grid nodes by default);
* ``H(x, p, agg)`` and ``Hp(x, p, agg)`` evaluate the Hamiltonian and its
  p-derivative;
* ``terminal_cost(m_T)`` samples ``g(x, m_T)`` on the grid;
* ``constants()`` returns the structural constants under which the model
  satisfies the growth/contraction assumptions used by the diagnostics.

The control is scalar (one space dimension), so ``p``, ``alpha`` and the
aggregates are plain floats or numpy arrays broadcast against ``x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateKernel, MissingConstants, UnsupportedVariant
from .grid import TorusGrid
from .profiles import Kernel, Profile

MASS_FLOOR = 1e-14


def conjugate(q: float) -> float:
    """Hölder conjugate exponent; ``inf`` and ``1`` map to each other."""
    if q == math.inf:
        return 1.0
    if q == 1.0:
        return math.inf
    return q / (q - 1.0)


@dataclass(frozen=True)
class StructuralConstants:
    """Constants of the growth, contraction and coercivity assumptions.

    ``C0`` bounds the drift growth, ``C_growth`` is the constant used in the
    bounds on ``H(x, 0, mu)``, ``H_x`` and the coercivity inequality (it
    defaults to ``C0``).  ``lambda2 = None`` means the model does not declare
    it.  Invariants are reported by :meth:`violations` rather than enforced
    on construction so that boundary fixtures can be built.
    """

    q: float
    q0: float
    lambda0: float
    C0: float
    lambda1: float = 0.0
    lambda2: Optional[float] = None
    beta0: float = 1.0
    C_growth: Optional[float] = None

    @property
    def q_prime(self) -> float:
        return conjugate(self.q)

    @property
    def growth(self) -> float:
        return self.C0 if self.C_growth is None else self.C_growth

    def require_lambda2(self) -> float:
        if self.lambda2 is None:
            raise MissingConstants("model does not declare lambda2")
        return self.lambda2

    def coercivity_bound(self) -> float:
        """Upper limit ``(1 - lambda0)^{q'} / C0^{q'}`` allowed for lambda1."""
        qp = self.q_prime
        return (1.0 - self.lambda0) ** qp / self.C0**qp

    def violations(self) -> list:
        out = []
        if not self.q > 1.0:
            out.append(f"q = {self.q} must exceed 1")
        if not self.q0 >= 1.0:
            out.append(f"q0 = {self.q0} must be >= 1")
        if not 0.0 <= self.lambda0 < 1.0:
            out.append(f"lambda0 = {self.lambda0} must lie in [0, 1)")
        if not self.C0 > 0.0:
            out.append(f"C0 = {self.C0} must be positive")
        if self.lambda1 < 0.0:
            out.append(f"lambda1 = {self.lambda1} must be nonnegative")
        elif self.lambda0 < 1.0 and not self.lambda1 < self.coercivity_bound():
            out.append(f"lambda1 = {self.lambda1} must be below {self.coercivity_bound()}")
        if self.lambda2 is not None and self.lambda2 < 0.0:
            out.append(f"lambda2 = {self.lambda2} must be nonnegative")
        return out


@dataclass
class JointMeasure:
    """Discrete joint state-control measure: density ``m`` carrying control ``alpha``."""

    grid: TorusGrid
    m: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), self.m.shape)
        if self.m.shape != (self.grid.n,):
            raise ValueError(f"density has shape {self.m.shape}, grid has {self.grid.n} nodes")

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights ``m_i h`` (sum to the total mass)."""
        return self.m * self.grid.h

    def mean(self, values) -> float:
        return float(np.dot(np.broadcast_to(values, self.m.shape), self.weights))

    def validate(self, tol: float = 1e-12):
        if np.min(self.m) < 0.0:
            raise ValueError("density has negative entries")
        mass = float(np.sum(self.weights))
        if abs(mass - 1.0) > tol:
            raise ValueError(f"density has mass {mass!r}, expected 1")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("control has non-finite entries")


# aggregate containers

@dataclass(frozen=True)
class MeanControl:
    mean: float


@dataclass(frozen=True)
class LocalMeanControl:
    mean: float
    density: np.ndarray  # m at the evaluation points


@dataclass(frozen=True)
class ImpactAggregates:
    mean: float
    l2: float  # (integral of alpha^2 dm)^(1/2)


@dataclass(frozen=True)
class KernelAggregates:
    V: np.ndarray
    Z: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.Z * self.V


def _eval_points(grid: TorusGrid, x):
    return grid.nodes if x is None else np.atleast_1d(np.asarray(x, dtype=float))


def _periodic_interp(grid: TorusGrid, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = np.mod(x, 1.0) / grid.h
    i = np.floor(s).astype(int) % grid.n
    w = s - np.floor(s)
    return (1.0 - w) * values[i] + w * values[(i + 1) % grid.n]


@lru_cache(maxsize=16)
def _kernel_table(kernel: Kernel, n: int) -> np.ndarray:
    nodes = np.arange(n) / n
    table = kernel.table(nodes, nodes)
    table.setflags(write=False)
    return table


class Model:
    """Common machinery: terminal cost and the per-slice aggregate operator."""

    name = "model"
    kernel: Optional[Kernel] = None

    def __init__(self, grid: TorusGrid, terminal: Profile = Profile(),
                 terminal_coupling: float = 0.0, smoothing: Optional[Kernel] = None):
        self.grid = grid
        self.terminal = terminal
        self.terminal_coupling = float(terminal_coupling)
        self._smoothing = smoothing

    # aggregates -------------------------------------------------------
    def aggregates(self, mu: JointMeasure, x=None):
        raise NotImplementedError

    def aggregate_operator(self, m: np.ndarray) -> Callable[[np.ndarray], object]:
        """Map ``alpha -> aggregates((m, alpha))`` at the grid nodes.

        Kernel models override this to reuse the density-only parts.
        """
        grid = self.grid

        def op(alpha):
            return self.aggregates(JointMeasure(grid, m, alpha))

        return op

    # Hamiltonian --------------------------------------------------------
    def H(self, x, p, agg):
        raise NotImplementedError

    def Hp(self, x, p, agg):
        raise NotImplementedError

    def constants(self) -> StructuralConstants:
        raise NotImplementedError

    def contraction_constant(self) -> float:
        return self.constants().lambda0

    # terminal cost --------------------------------------------------------
    @property
    def smoothing(self) -> Kernel:
        if self._smoothing is not None:
            return self._smoothing
        if self.kernel is not None and not self.kernel.is_constant():
            return self.kernel
        return Kernel("cosine", 0.5)

    def smoothed_density(self, m: np.ndarray) -> np.ndarray:
        """Kernel average ``sum_j k_ij m_j h / sum_j k_ij h``."""
        table = _kernel_table(self.smoothing, self.grid.n)
        return (table @ m) / table.sum(axis=1)

    def terminal_cost(self, m_T: np.ndarray) -> np.ndarray:
        g = np.asarray(self.terminal(self.grid.nodes), dtype=float)
        if self.terminal_coupling != 0.0:
            g = g + self.terminal_coupling * self.smoothed_density(np.asarray(m_T, dtype=float))
        return g

    def terminal_bound(self) -> float:
        """Upper bound of ``|g(x, m)|`` over probability densities ``m``."""
        bound = self.terminal.sup_norm(0)
        if self.terminal_coupling != 0.0:
            table = _kernel_table(self.smoothing, self.grid.n)
            bound += abs(self.terminal_coupling) * float(
                np.max(table) / np.min(table.sum(axis=1) * self.grid.h))
        return bound

    def describe(self) -> dict:
        return {"kind": self.name}


class LinearDemand(Model):
    """Bertrand-Cournot competition with linear demand.

    ``H = (p + a*abar - b)^2 / 4`` with ``a = eps/(1+eps)``, ``b = 1/(1+eps)``
    and ``abar`` the mean control.
    """

    name = "linear_demand"

    def __init__(self, grid, eps: float = 1.0, **kw):
        super().__init__(grid, **kw)
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        self.eps = float(eps)
        self.a = self.eps / (1.0 + self.eps)
        self.b = 1.0 / (1.0 + self.eps)

    def aggregates(self, mu, x=None):
        return MeanControl(mu.mean(mu.alpha))

    def aggregate_operator(self, m):
        w = m * self.grid.h
        return lambda alpha: MeanControl(float(np.dot(w, alpha)))

    def H(self, x, p, agg):
        return 0.25 * (p + self.a * agg.mean - self.b) ** 2

    def Hp(self, x, p, agg):
        return 0.5 * (p + self.a * agg.mean - self.b)

    def constants(self):
        # With C = 4 the coercivity bound holds for every eps:
        # p^2/4 - (a L + b)^2/4 >= p^2/4 - L^2/4 - 1/2 since a + b = 1.
        return StructuralConstants(q=2.0, q0=1.0, lambda0=self.a / 2.0, C0=0.5,
                                   lambda1=1.0, lambda2=self.a**2 / 2.0, C_growth=4.0)

    def closed_form_mean(self, p, m) -> float:
        """Mean control of the untruncated fixed point for gradient ``p``."""
        pbar = float(np.dot(np.broadcast_to(p, m.shape), m * self.grid.h))
        return -0.5 * (pbar - self.b) / (1.0 + 0.5 * self.a)

    def describe(self):
        return {"kind": self.name, "eps": self.eps}


class NegCorrResources(Model):
    """Exhaustible resources with negatively correlated demand (scalar case).

    ``H = (p + c_M*abar)^2 / 4 - f(x, m)`` with ``f = f0(x) + c*m(x)`` and
    ``|c_M| < 1`` the scalar resource coupling.  The matrix version of the
    aggregate algebra is in :func:`neg_corr_mean_control`.
    """

    name = "neg_corr"

    def __init__(self, grid, coupling: float = 0.8, running: Profile = Profile(),
                 local_weight: float = 0.0, **kw):
        super().__init__(grid, **kw)
        if not abs(coupling) < 1.0:
            raise ValueError("resource coupling must have norm below 1")
        self.coupling = float(coupling)
        self.running = running
        self.local_weight = float(local_weight)

    def aggregates(self, mu, x=None):
        pts = _eval_points(self.grid, x)
        if x is None:
            dens = mu.m
        else:
            dens = _periodic_interp(self.grid, mu.m, pts)
        return LocalMeanControl(mu.mean(mu.alpha), dens)

    def aggregate_operator(self, m):
        w = m * self.grid.h
        return lambda alpha: LocalMeanControl(float(np.dot(w, alpha)), m)

    def running_cost(self, x, agg):
        return self.running(x) + self.local_weight * agg.density

    def H(self, x, p, agg):
        return 0.25 * (p + self.coupling * agg.mean) ** 2 - self.running_cost(x, agg)

    def Hp(self, x, p, agg):
        return 0.5 * (p + self.coupling * agg.mean)

    def constants(self):
        if self.local_weight != 0.0:
            raise MissingConstants("constants are declared only for a density-free running cost")
        c = abs(self.coupling)
        C = max(4.0, self.running.sup_norm(0), self.running.sup_norm(1))
        return StructuralConstants(q=2.0, q0=1.0, lambda0=c / 2.0, C0=0.5,
                                   lambda1=max(1.0, C * c**2 / 4.0),
                                   lambda2=c**2 / 4.0, C_growth=C)

    def closed_form_mean(self, p, m) -> float:
        pbar = float(np.dot(np.broadcast_to(p, m.shape), m * self.grid.h))
        return float(neg_corr_mean_control(np.array([[self.coupling]]), np.array([pbar]))[0])

    def describe(self):
        return {"kind": self.name, "coupling": self.coupling, "local_weight": self.local_weight}


def neg_corr_mean_control(M, pbar) -> np.ndarray:
    """Mean control ``-(I + M/2)^{-1} pbar / 2`` for a resource coupling matrix M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    pbar = np.atleast_1d(np.asarray(pbar, dtype=float))
    if np.linalg.norm(M, 2) >= 1.0:
        raise ValueError("resource coupling must have operator norm below 1")
    return -0.5 * np.linalg.solve(np.eye(M.shape[0]) + 0.5 * M, pbar)


def neg_corr_mean_control_iterative(M, pbar, tol=1e-14, max_iter=500) -> np.ndarray:
    """Banach iteration ``abar <- -(pbar + M abar)/2`` for the same mean control."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    pbar = np.atleast_1d(np.asarray(pbar, dtype=float))
    abar = np.zeros_like(pbar)
    for _ in range(max_iter):
        new = -0.5 * (pbar + M @ abar)
        if np.max(np.abs(new - abar)) <= tol:
            return new
        abar = new
    return abar


class PriceImpact(Model):
    """Trade crowding with price impact and quadratic transaction cost.

    ``H = (p + et*L2)^2 / 2 + x*abar - f(x)`` where ``L2`` is the L2(m) norm of
    the control and ``et`` the spread coefficient in (0, 1/2).
    """

    name = "price_impact"

    def __init__(self, grid, eps_tilde: float = 0.3, running: Profile = Profile(), **kw):
        super().__init__(grid, **kw)
        if not 0.0 < eps_tilde < 0.5:
            raise ValueError("eps_tilde must lie in (0, 1/2)")
        self.eps_tilde = float(eps_tilde)
        self.running = running

    def aggregates(self, mu, x=None):
        return ImpactAggregates(mu.mean(mu.alpha), math.sqrt(mu.mean(mu.alpha**2)))

    def aggregate_operator(self, m):
        w = m * self.grid.h
        return lambda alpha: ImpactAggregates(float(np.dot(w, alpha)),
                                              math.sqrt(float(np.dot(w, alpha * alpha))))

    def H(self, x, p, agg):
        return 0.5 * (p + self.eps_tilde * agg.l2) ** 2 + x * agg.mean - self.running(x)

    def Hp(self, x, p, agg):
        return p + self.eps_tilde * agg.l2

    def constants(self):
        et = self.eps_tilde
        F0 = self.running.sup_norm(0)
        F1 = self.running.sup_norm(1)
        # B1 by Young: |x abar| <= s^2/2 + 1/2; B2: |abar - f'| <= (1 + s^2)/2 + F1;
        # coercivity needs C >= 2 and (lambda1/C - et^2/2) s^2 - s + C - F0 >= 0.
        C = max(2.0, 0.5 + F0, 0.5 + F1)
        lambda1 = C * (0.5 * et**2 + 1.0 / (4.0 * (C - F0)))
        return StructuralConstants(q=2.0, q0=2.0, lambda0=et, C0=1.0, lambda1=lambda1,
                                   lambda2=0.5 * (1.0 + et**2), C_growth=C)

    def closed_form_l2(self, p, m) -> float:
        """``L2`` of the untruncated fixed point: positive root of
        ``(1 - et^2) s^2 - 2 et P1 s - P2 = 0`` with ``Pk`` the k-th moment of p."""
        w = m * self.grid.h
        p = np.broadcast_to(p, m.shape)
        et = self.eps_tilde
        P1 = float(np.dot(w, p))
        P2 = float(np.dot(w, p * p))
        a, b, c = 1.0 - et**2, -2.0 * et * P1, -P2
        return (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)

    def describe(self):
        return {"kind": self.name, "eps_tilde": self.eps_tilde}


class _KernelModel(Model):
    """Models whose aggregates are kernel averages of the control."""

    def __init__(self, grid, kernel: Kernel, running: Profile = Profile(), **kw):
        super().__init__(grid, **kw)
        self.kernel = kernel
        self.running = running

    @property
    def table(self) -> np.ndarray:
        return _kernel_table(self.kernel, self.grid.n)

    def _kernel_rows(self, x):
        if x is None:
            return self.table
        return self.kernel.table(_eval_points(self.grid, x), self.grid.nodes)

    def _normalizer(self, rows: np.ndarray, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def aggregates(self, mu, x=None):
        rows = self._kernel_rows(x)
        Z = self._normalizer(rows, mu.m)
        if np.any(Z <= 0.0):
            raise DegenerateKernel("kernel vanishes on the support of m")
        return KernelAggregates((rows @ (mu.alpha * mu.weights)) / Z, Z)

    def aggregate_operator(self, m):
        Z = self._normalizer(self.table, m)
        if np.any(Z <= 0.0):
            raise DegenerateKernel("kernel vanishes on the support of m")
        W = self.table * (m * self.grid.h)[None, :] / Z[:, None]
        return lambda alpha: KernelAggregates(W @ alpha, Z)


class CrowdMotion(_KernelModel):
    """Crowd motion with running cost
    ``theta/a' |alpha - lt V|^{a'} + (1-theta)/b' |alpha|^{b'} + f(x)``.

    The Hamiltonian has a closed form for ``a = b = 2`` and for ``theta = 1``;
    other exponents are handled only by :mod:`mfgc.assumptions`.
    """

    name = "crowd_motion"

    def __init__(self, grid, theta: float = 0.5, lambda_tilde: float = 0.5, a: float = 2.0,
                 b: float = 2.0, q0: float = 2.0, kernel: Kernel = Kernel("cosine", 0.5), **kw):
        super().__init__(grid, kernel, **kw)
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not -1.0 < lambda_tilde < 1.0:
            raise ValueError("lambda_tilde must lie in (-1, 1)")
        if a < 2.0 or b < 2.0:
            raise ValueError("exponents a, b must be at least 2")
        if not q0 > 1.0:
            raise ValueError("q0 must exceed 1")
        self.theta = float(theta)
        self.lambda_tilde = float(lambda_tilde)
        self.a = float(a)
        self.b = float(b)
        self.q0 = float(q0)

    @property
    def variant(self) -> str:
        if self.a == 2.0 and self.b == 2.0:
            return "quadratic"
        if self.theta == 1.0:
            return "pure_deviation"
        return "general"

    def _require_closed_form(self):
        if self.variant == "general":
            raise UnsupportedVariant(
                "no closed-form Hamiltonian unless a = b = 2 or theta = 1")

    def _normalizer(self, rows, m):
        w = m * self.grid.h
        r = conjugate(self.q0)
        if r == math.inf:
            return np.max(np.where(m[None, :] > MASS_FLOOR, rows, 0.0), axis=1)
        return (rows**r @ w) ** (1.0 / r)

    def H(self, x, p, agg):
        self._require_closed_form()
        lt, th = self.lambda_tilde, self.theta
        f = self.running(x)
        if self.variant == "quadratic":
            return 0.5 * p * p - lt * th * p * agg.V - 0.5 * lt**2 * th * (1 - th) * agg.V**2 - f
        return np.abs(p) ** self.a / self.a - lt * p * agg.V - f

    def Hp(self, x, p, agg):
        self._require_closed_form()
        lt, th = self.lambda_tilde, self.theta
        if self.variant == "quadratic":
            return p - lt * th * agg.V
        return np.abs(p) ** (self.a - 2.0) * p - lt * agg.V

    def lagrangian(self, x, alpha, agg):
        ap, bp = conjugate(self.a), conjugate(self.b)
        th = self.theta
        return (th / ap * np.abs(alpha - self.lambda_tilde * agg.V) ** ap
                + (1 - th) / bp * np.abs(alpha) ** bp + self.running(x))

    def constants(self):
        self._require_closed_form()
        lt, th = abs(self.lambda_tilde), self.theta
        K = self.kernel.log_lipschitz
        F0, F1 = self.running.sup_norm(0), self.running.sup_norm(1)
        # |V| <= Lambda_q0 and |V_x| <= 2 K Lambda_q0 drive the x-derivative bound.
        if self.variant == "quadratic":
            C = max(2.0, F0, F1, lt * th * K + 2.0 * lt**2 * th * (1 - th) * K)
            return StructuralConstants(q=2.0, q0=self.q0, lambda0=lt * th, C0=1.0, lambda1=0.0,
                                       lambda2=0.5 * lt**2 * th * (1 - th), C_growth=C)
        C = max(conjugate(self.a), F0, F1, 2.0 * lt * K)
        return StructuralConstants(q=self.a, q0=self.q0, lambda0=lt, C0=1.0, lambda1=0.0,
                                   lambda2=0.0, C_growth=C)

    def describe(self):
        return {"kind": self.name, "theta": self.theta, "lambda_tilde": self.lambda_tilde,
                "a": self.a, "b": self.b, "q0": self.q0}


class Flocking(_KernelModel):
    """First-order flocking: ``H = (p^2 - 2 Z A p - A^2) / (2 (1 + Z^2)) - f(x)``
    with ``A = int alpha phi dmu`` and ``Z = int phi dm``."""

    name = "flocking"

    def __init__(self, grid, kernel: Kernel = Kernel("cosine", 1.0, 0.5), **kw):
        super().__init__(grid, kernel, **kw)

    def _normalizer(self, rows, m):
        return rows @ (m * self.grid.h)

    def H(self, x, p, agg):
        Z, A = agg.Z, agg.A
        return (p * p - 2.0 * Z * A * p - A * A) / (2.0 * (1.0 + Z * Z)) - self.running(x)

    def Hp(self, x, p, agg):
        Z = agg.Z
        return (p - Z * agg.A) / (1.0 + Z * Z)

    def constants(self):
        phi = self.kernel.max
        dphi = self.kernel.derivative_max
        # sup of z/(1+z^2) over z in [0, phi] is attained at min(phi, 1)
        lam0 = phi * (phi / (1.0 + phi**2) if phi <= 1.0 else 0.5)
        F0, F1 = self.running.sup_norm(0), self.running.sup_norm(1)
        C = max(2.0 * (1.0 + phi**2), F0, F1, phi * dphi * (2.0 + 2.0 * phi**2))
        return StructuralConstants(q=2.0, q0=1.0, lambda0=lam0, C0=1.0, lambda1=0.0,
                                   lambda2=0.5 * phi**2, C_growth=C)

    def describe(self):
        return {"kind": self.name}


# functional facade -------------------------------------------------------------

def eval_H(model: Model, x, p, agg):
    return model.H(x, p, agg)


def eval_Hp(model: Model, x, p, agg):
    return model.Hp(x, p, agg)


def compute_aggregates(model: Model, mu: JointMeasure, x=None):
    return model.aggregates(mu, x)


def terminal_cost(model: Model, m_T) -> np.ndarray:
    return model.terminal_cost(m_T)


def contraction_constant(model: Model) -> float:
    return model.contraction_constant()


MODEL_KINDS = {
    "linear_demand": LinearDemand,
    "neg_corr": NegCorrResources,
    "price_impact": PriceImpact,
    "crowd_motion": CrowdMotion,
    "flocking": Flocking,
}
