"""Exception taxonomy shared across the package.

ValidationError covers bad inputs (CLI exit 3); NumericalError covers
failures of the numerics themselves (CLI exit 4).
"""


class WassdoeError(Exception):
    """Base class for package errors."""


class ValidationError(WassdoeError, ValueError):
    """An input violates a documented invariant or precondition."""


class ConfigurationError(ValidationError):
    """A configuration describes an empty or inconsistent problem."""


class DomainMismatchError(ValidationError):
    """Operands live on incompatible supports or dimensions."""


class NumericalError(WassdoeError, RuntimeError):
    """A numerical procedure failed (singular matrix, nonconvergence)."""


class FitError(NumericalError):
    """Gaussian-process fitting failed."""
