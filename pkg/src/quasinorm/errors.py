"""Exception hierarchy shared by every module of the package."""


class QuasinormError(Exception):
    """Base class for all package errors."""


class DomainError(QuasinormError, ValueError):
    """An input lies outside the domain of the operation (non-finite, zero field, ...)."""


class ConvergenceError(QuasinormError, RuntimeError):
    """An iterative method exhausted its budget.

    ``best`` carries the best iterate found so far when one exists.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EvaluationError(QuasinormError, FloatingPointError):
    """A functional produced a non-finite intermediate value."""


class ConfigurationError(QuasinormError, ValueError):
    """Parameters violate a required inequality or are missing."""


class BoundaryEscapeError(ConvergenceError):
    """A constrained iterate left the admissible gradient ball."""


class SolverFailure(ConvergenceError):
    """A solver returned a result contradicting a proven sign condition."""
