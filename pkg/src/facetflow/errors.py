"""Exception hierarchy shared by all facetflow modules."""


class FacetflowError(Exception):
    """Base class for every error raised by the library."""


class DomainError(FacetflowError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class SingularityError(DomainError):
    """Evaluation at a point where the quantity is not single-valued (e.g. the
    gradient of a one-homogeneous density at the origin)."""


class UsageError(FacetflowError, ValueError):
    """Mismatched or inconsistent inputs (wrong grid, bad boundary data...)."""


class NumericalError(FacetflowError, ArithmeticError):
    """A quadrature or arithmetic routine produced non-finite values."""


class LinearSolverError(FacetflowError, RuntimeError):
    """The conjugate gradient iteration broke down or did not converge."""


class NonConvergenceError(FacetflowError, RuntimeError):
    """Newton iteration did not reach the requested tolerance.

    The last iterate is kept on the exception so callers can inspect or
    restart from it.
    """

    def __init__(self, message, last_iterate=None, eps=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.eps = eps
        self.residual = residual


class OracleError(FacetflowError, RuntimeError):
    """Construction of a semi-analytic reference solution failed."""


class ConfigError(FacetflowError, ValueError):
    """Invalid run configuration. ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
