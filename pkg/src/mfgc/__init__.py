"""Finite-difference solver for second-order mean field games of controls on
the one-dimensional torus."""

from .coupler import SolveResult, SolverConfig, solve, solve_with_continuation
from .grid import TimeGrid, TorusGrid
from .models import (CrowdMotion, Flocking, JointMeasure, LinearDemand, NegCorrResources,
                     PriceImpact, StructuralConstants)
from .pde import SchemeConfig
from .profiles import Kernel, Profile

__all__ = [
    "CrowdMotion", "Flocking", "JointMeasure", "Kernel", "LinearDemand", "NegCorrResources",
    "PriceImpact", "Profile", "SchemeConfig", "SolveResult", "SolverConfig",
    "StructuralConstants", "TimeGrid", "TorusGrid", "solve", "solve_with_continuation",
]
__version__ = "0.1.0"
