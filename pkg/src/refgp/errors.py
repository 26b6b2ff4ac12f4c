"""Exception hierarchy shared by all modules."""


class RefGPError(Exception):
    """Base class for errors raised by refgp."""


class ConfigError(RefGPError, ValueError):
    """Invalid user configuration or input data."""


class DesignError(ConfigError):
    """The regression design is rank deficient or inconsistent with the data."""


class NumericalError(RefGPError, ArithmeticError):
    """A computation broke down numerically (non-PD factor, NaN, ...)."""


class DomainBoundaryError(NumericalError):
    """A covariance or information matrix is not numerically positive definite."""


class FlatTailError(NumericalError):
    """The objective does not rise enough along a search direction."""


class OptimizationError(NumericalError):
    """The optimizer hit a NaN; carries the last iterate for diagnostics."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
