"""Exception hierarchy."""


class VindError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(VindError, ValueError):
    """A parameter or argument lies outside its mathematical domain."""


class BoundaryError(DomainError):
    """A two-sided coupling is invalid at the current parameters.

    Raised when ``lambda - eps`` leaves the valid parameter region. Callers
    should switch the block to a one-sided difference.
    """

    def __init__(self, message, block=None):
        super().__init__(message if block is None else f"{block}: {message}")
        self.block = block


class ContractError(VindError):
    """A caller violated an API contract (e.g. missing base randomness)."""


class CapabilityError(VindError):
    """The model or family lacks a capability the estimator needs."""


class EstimatorError(VindError, ArithmeticError):
    """A gradient estimate could not be formed, typically a non-finite log density."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class OptimizerError(VindError, ArithmeticError):
    def __init__(self, message, block=None):
        super().__init__(message if block is None else f"{block}: {message}")
        self.block = block


class ConfigError(VindError):
    """Invalid run configuration (parse error or semantic error)."""


class DataError(VindError):
    """Malformed input data."""
