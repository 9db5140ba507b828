"""Exception hierarchy shared by all modules."""


class TelebenchError(Exception):
    """Base class for library errors."""


class DomainError(TelebenchError, ValueError):
    """A parameter lies outside the domain of the operation."""


class ShapeError(TelebenchError, ValueError):
    """Operands have incompatible dimensions, grids or qubit counts."""


class TruncationError(TelebenchError):
    """A Fock truncation is too small for the requested object."""


class CoverageError(TelebenchError):
    """A classical grid does not cover the support it must represent."""


class ConfigurationError(TelebenchError):
    """Missing or inconsistent configuration (e.g. no seed for a Monte Carlo path)."""


class ResourceError(TelebenchError):
    """The requested computation would exceed the supported size."""


class DegenerateInputError(TelebenchError, ValueError):
    """Input carries no usable mass or defines a degenerate model."""


class PreconditionError(TelebenchError, ValueError):
    """A documented precondition of the operation is violated."""


class InvariantViolation(TelebenchError, AssertionError):
    """An internal consistency check failed."""
