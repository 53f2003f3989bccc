"""Exception hierarchy.

The CLI maps ``ValidationError`` to exit code 2 and ``NumericalError`` to 3.
"""


class MarssError(Exception):
    """Base class for all package errors."""


class ValidationError(MarssError, ValueError):
    """Malformed input: shapes, labels, ranges, missing pieces."""


class NumericalError(MarssError, ArithmeticError):
    """A computation lost positive definiteness or produced non-finite values."""
