"""Error taxonomy shared by the library, service, and CLI.

Exit-code / HTTP mapping: UsageError -> exit 1 / HTTP 400 (kind "usage"),
DataError -> exit 2 / HTTP 400 (kind "data"), InvariantError -> exit 3 /
HTTP 500 (kind "internal").
"""


class ShapeBenchError(Exception):
    """Base class for all package errors."""


class UsageError(ShapeBenchError):
    """Caller supplied arguments that cannot be acted on (bad flag combos,
    out-of-range parameters)."""


class DataError(ShapeBenchError):
    """Input data is malformed or inconsistent (resolution mismatch, empty
    shape, unreadable file)."""


class InvariantError(ShapeBenchError):
    """An internal invariant was violated; indicates a bug, not bad input."""
