"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/config problems exit with 2,
numeric failures (NaN/Inf encountered mid-run) exit with 3.
"""


class UsageError(ValueError):
    """Caller passed arguments that violate an operation's contract."""


class StructureError(ValueError):
    """Shapes or schemas of the supplied objects are inconsistent."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where finiteness is guaranteed."""
