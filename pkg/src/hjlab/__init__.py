"""Vanishing-viscosity and discrete-adjoint laboratory for Hamilton-Jacobi equations on the torus."""

__version__ = "0.1.0"

from .errors import (CflViolation, ConfigError, HJLabError, InsufficientSpread, MissingStates,
                     MonotonicityViolation, NotConverged, PecletViolation, StepRejected)
from .grid import Field, PeriodicGrid
from .hamiltonian import CATALOG, HamiltonianModel, build_model
from .solver import ForwardRun, solve_inviscid_lf, solve_viscous
from .adjoint import AdjointRun, solve_adjoint
from .cell import CellSolution, ergodic_constant, rate_study

__all__ = [
    "CflViolation", "ConfigError", "HJLabError", "InsufficientSpread", "MissingStates", "MonotonicityViolation",
    "NotConverged", "PecletViolation", "StepRejected", "Field", "PeriodicGrid", "CATALOG", "HamiltonianModel",
    "build_model", "ForwardRun", "solve_inviscid_lf", "solve_viscous", "AdjointRun", "solve_adjoint",
    "CellSolution", "ergodic_constant", "rate_study",
]
