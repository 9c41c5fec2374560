"""Exception types shared across the package."""


class GcrpError(Exception):
    """Base class for all package errors."""


class InvalidRegime(GcrpError, ValueError):
    """(alpha, theta) lies outside every admissible parameter regime."""


class IllegalMove(GcrpError, ValueError):
    """A requested transition is impossible from the current state."""


class DomainError(GcrpError, ValueError):
    """An argument is outside the validity domain of a formula or check."""


class CapExceeded(GcrpError, ValueError):
    """A resource cap (enumeration size, tracked k, ...) was exceeded."""
