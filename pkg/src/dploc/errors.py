"""Exception types shared across the package."""


class DplocError(Exception):
    """Base class for all package errors."""


class InvalidParameter(DplocError, ValueError):
    """A parameter violates an operation's preconditions."""


class InputError(DplocError, ValueError):
    """Malformed or inconsistent input data (files, point sets, graphs)."""


class UnsupportedShape(DplocError, ValueError):
    """A polygon cannot be handled by the requested operation."""


class InvalidRegion(DplocError, ValueError):
    """A region is unusable for the requested operation (e.g. zero diameter)."""


class UndefinedMetric(DplocError, ValueError):
    """A metric is undefined for the given inputs (e.g. empty reference set)."""


class InvariantViolation(DplocError, RuntimeError):
    """An internal consistency check failed; indicates a bug, never bad input."""
