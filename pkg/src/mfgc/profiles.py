"""Smooth periodic profiles and convolution kernels on the unit torus.

A ``Profile`` is ``const + amp*cos(2*pi*mode*(x - shift))``; it is how the
running penalty f, the terminal cost g and the initial density m0 are given
in configuration files.  A ``Kernel`` is a nonnegative function of the
periodic offset ``x - y``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Profile:
    const: float = 0.0
    amp: float = 0.0
    mode: int = 1
    shift: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.const + self.amp * np.cos(TWO_PI * self.mode * (x - self.shift))

    def derivative(self, x, order: int = 1):
        x = np.asarray(x, dtype=float)
        w = TWO_PI * self.mode
        phase = w * (x - self.shift) + 0.5 * math.pi * order
        return self.amp * w**order * np.cos(phase)

    def sup_norm(self, order: int = 0) -> float:
        """Upper bound of ``|d^order/dx^order profile|`` on the torus."""
        bound = abs(self.amp) * (TWO_PI * self.mode) ** order
        if order == 0:
            bound += abs(self.const)
        return bound

    def density(self, x) -> np.ndarray:
        """Samples normalized to unit rectangle-rule mass (for m0)."""
        vals = np.asarray(self(x), dtype=float)
        return vals / (np.mean(vals))


@dataclass(frozen=True)
class Kernel:
    """``kind`` is one of ``constant``, ``cosine`` (``scale*(1 + kappa*cos)``,
    ``0 <= kappa <= 1``) or ``vonmises`` (``scale*exp(kappa*(cos - 1))``)."""

    kind: str = "cosine"
    kappa: float = 0.5
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "cosine", "vonmises"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.scale <= 0:
            raise ValueError("kernel scale must be positive")
        if self.kind == "cosine" and not 0.0 <= self.kappa <= 1.0:
            raise ValueError("cosine kernel needs 0 <= kappa <= 1 to stay nonnegative")
        if self.kind == "vonmises" and self.kappa < 0:
            raise ValueError("von Mises kernel needs kappa >= 0")

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        if self.kind == "constant":
            return np.full(d.shape, self.scale)
        c = np.cos(TWO_PI * d)
        if self.kind == "cosine":
            return self.scale * (1.0 + self.kappa * c)
        return self.scale * np.exp(self.kappa * (c - 1.0))

    def derivative(self, d):
        """Derivative with respect to the first argument x of k(x - y)."""
        d = np.asarray(d, dtype=float)
        if self.kind == "constant":
            return np.zeros(d.shape)
        s = np.sin(TWO_PI * d)
        if self.kind == "cosine":
            return -self.scale * self.kappa * TWO_PI * s
        return -TWO_PI * self.kappa * s * self(d)

    @property
    def max(self) -> float:
        return self.scale * (1.0 + self.kappa) if self.kind == "cosine" else self.scale

    @property
    def min(self) -> float:
        if self.kind == "constant":
            return self.scale
        if self.kind == "cosine":
            return self.scale * (1.0 - self.kappa)
        return self.scale * math.exp(-2.0 * self.kappa)

    @property
    def derivative_max(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "cosine":
            return self.scale * self.kappa * TWO_PI
        if self.kappa == 0.0:
            return 0.0
        # sin t exp(kappa (cos t - 1)) peaks where kappa cos^2 t + cos t - kappa = 0
        c = 2.0 * self.kappa / (1.0 + math.sqrt(1.0 + 4.0 * self.kappa**2))
        return TWO_PI * self.kappa * self.scale * math.sqrt(1.0 - c * c) * math.exp(
            self.kappa * (c - 1.0))

    @property
    def log_lipschitz(self) -> float:
        """``sup |k'| / k``; infinite when the kernel touches zero."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "cosine":
            if self.kappa >= 1.0:
                return math.inf
            return TWO_PI * self.kappa / math.sqrt(1.0 - self.kappa**2)
        return TWO_PI * self.kappa

    def is_constant(self) -> bool:
        return self.kind == "constant" or self.kappa == 0.0

    def table(self, x, y) -> np.ndarray:
        """``k(x_i, y_j)`` for 1-D point sets ``x`` and ``y``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self(x[:, None] - y[None, :])
