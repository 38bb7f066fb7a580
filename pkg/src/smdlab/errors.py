"""Shared exception types."""


class SmdLabError(Exception):
    """Base class for library errors."""


class DomainError(SmdLabError, ValueError):
    """A point lies outside a potential's domain."""


class NumericsError(SmdLabError, RuntimeError):
    """An iterative numeric routine failed to converge or produced non-finite values."""


class PreconditionError(SmdLabError, ValueError):
    """A documented operation precondition was violated (e.g. inconsistent reference pair)."""
