"""Exception hierarchy shared by all modules."""


class DualControlError(Exception):
    """Base class for package errors."""


class DomainError(DualControlError, ValueError):
    """An argument lies outside the domain of the operation."""


class ThresholdError(DomainError):
    """Wealth at or above the threshold ``-U~'(0)``; the value is constant there."""


class DegenerateError(DomainError):
    """Quantity is undefined at maturity (zero kernel width)."""


class NumericalError(DualControlError, ArithmeticError):
    """A numerical procedure failed to converge or bracket."""


class ConfigError(DualControlError, ValueError):
    """Invalid run configuration."""
