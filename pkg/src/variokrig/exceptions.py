"""Exception hierarchy shared by all variokrig modules."""


class VariokrigError(Exception):
    """Base class for all package errors."""


class DomainError(VariokrigError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(VariokrigError, ArithmeticError):
    """A computation failed numerically (overflow, singular matrix, ...)."""


class SingularMatrixError(NumericError):
    """A linear system stayed singular even after the jitter ladder."""


class FormatError(VariokrigError, ValueError):
    """Malformed serialized input (CSV, spec strings, tables)."""
