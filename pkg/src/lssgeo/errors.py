"""Exception hierarchy shared by every module."""


class LssError(Exception):
    """Base class for all library errors."""


class DomainError(LssError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class ValidationError(LssError, ValueError):
    """User-supplied input failed a consistency check."""


class NonConvergence(LssError, RuntimeError):
    """An iterative numerical routine exhausted its budget."""


class ChartError(LssError):
    """A point or path left the domain of a coordinate chart.

    ``exit_t`` carries the path parameter at which the exit happened, when
    that is meaningful.
    """

    def __init__(self, message, exit_t=None):
        super().__init__(message)
        self.exit_t = exit_t


class FitError(LssError, RuntimeError):
    """Least-squares refinement failed."""
