"""Exception types raised across the package."""


class PCQError(Exception):
    """Base class for all package errors."""


class ValidationError(PCQError, ValueError):
    """Input data violates a structural or analytic assumption."""


class ConfigError(ValidationError):
    """Malformed experiment configuration.

    ``key`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class SolverError(PCQError, RuntimeError):
    """A linear or nonlinear solve failed.

    ``report`` carries the solver report when one is available.
    """

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class SingularSystemError(SolverError):
    """Sparse factorization failed or produced an unusable solution."""


class NotStationaryError(PCQError):
    """A second-order routine was called at a point violating first-order conditions."""

    def __init__(self, foc_residual, tol):
        self.foc_residual = foc_residual
        self.tol = tol
        super().__init__(
            f"first-order residual {foc_residual:.3e} exceeds tolerance {tol:.3e}; "
            "the point is not stationary"
        )
