"""Exception hierarchy shared by all modules."""


class PointNLSError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PointNLSError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ConvergenceError(PointNLSError, RuntimeError):
    """A series or quadrature failed to reach the requested tolerance.

    Attributes
    ----------
    achieved : float or None
        Best error estimate reached before giving up.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class TailBoundError(PointNLSError, ValueError):
    """A momentum-space tail fails its declared integrability bound."""


class ResolutionError(PointNLSError, ValueError):
    """A grid is too coarse for the requested oscillation budget."""


class ConfigError(PointNLSError, ValueError):
    """Invalid or unknown configuration fields."""


class SolverError(PointNLSError, RuntimeError):
    """Time stepping failed for a reason other than detected blow-up."""
