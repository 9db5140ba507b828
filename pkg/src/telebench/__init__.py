"""Benchmarks for quantum teleportation of qubit ensembles via local asymptotic normality."""
from . import benchmark, fock, gaussian, lan, protocol, schur_weyl
from .errors import (ConfigurationError, CoverageError, DegenerateInputError, DomainError,
                     InvariantViolation, PreconditionError, ResourceError, ShapeError,
                     TelebenchError, TruncationError)

__version__ = "0.1.0"

__all__ = [
    "benchmark", "fock", "gaussian", "lan", "protocol", "schur_weyl",
    "ConfigurationError", "CoverageError", "DegenerateInputError", "DomainError",
    "InvariantViolation", "PreconditionError", "ResourceError", "ShapeError",
    "TelebenchError", "TruncationError",
]
