"""Normalized solutions for a quasilinear Schrodinger equation, solved through a dual change of variables."""

__version__ = "0.1.0"

from .dual_transform import DEFAULT as DUAL, DualTransform
from .errors import (
    BoundaryEscapeError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    EvaluationError,
    QuasinormError,
    SolverFailure,
)
from .gn_estimator import ConstantCache, QuotientSpec, estimate_constant, get_or_estimate
from .mountain_pass import MountainOptions, mountain_pass_solve
from .radial import RadialField, RadialGrid
from .solvers import SolverOptions, blowup_witness, global_minimize, local_minimize, subadditivity_check
from .variational import GNConstant, ProblemParams, energy, landscape, mass, thresholds

__all__ = [
    "DUAL", "DualTransform", "BoundaryEscapeError", "ConfigurationError", "ConvergenceError", "DomainError",
    "EvaluationError", "QuasinormError", "SolverFailure", "ConstantCache", "QuotientSpec", "estimate_constant",
    "get_or_estimate", "MountainOptions", "mountain_pass_solve", "RadialField", "RadialGrid", "SolverOptions",
    "blowup_witness", "global_minimize", "local_minimize", "subadditivity_check", "GNConstant", "ProblemParams",
    "energy", "landscape", "mass", "thresholds",
]
