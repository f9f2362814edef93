"""Exception hierarchy shared across the package."""


class StrokeforgeError(Exception):
    """Base class for all package errors."""


class DomainError(StrokeforgeError, ValueError):
    """Input outside an operation's documented domain."""


class ConfigError(StrokeforgeError, ValueError):
    """Inconsistent or out-of-range configuration."""


class NumericError(StrokeforgeError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class TransportError(StrokeforgeError, RuntimeError):
    """Remote loss/metric service unreachable or misbehaving."""


class NoDrawableContent(DomainError):
    """Every region reported zero edge points; nothing to allocate."""
