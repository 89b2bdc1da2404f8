"""Exception types shared across the package.

Each class corresponds to one failure category so the CLI can map them to
stable exit codes (1 usage/config, 2 data, 3 numerical divergence).
"""


class UrgentBayesError(Exception):
    """Base class for all package errors."""


class DomainError(UrgentBayesError, ValueError):
    """A value lies outside the documented domain of an operation."""


class ConfigurationError(UrgentBayesError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class UsageError(UrgentBayesError, ValueError):
    """An operation was called in a way its contract forbids."""


class ShapeError(UrgentBayesError, ValueError):
    """Array shapes are inconsistent with the operation."""


class NonFiniteError(UrgentBayesError, ValueError):
    """NaN or Inf encountered at an operation boundary."""


class ParseError(UrgentBayesError, ValueError):
    """A malformed line or record in an input file; carries the location."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(UrgentBayesError, ValueError):
    """An input file does not match its declared format."""


class DataError(UrgentBayesError, ValueError):
    """Invalid dataset content (bad labels, empty text, missing columns)."""


class StratificationError(UrgentBayesError, ValueError):
    """A stratified split cannot be formed from the given examples."""


class DivergenceError(UrgentBayesError, ArithmeticError):
    """Training produced a non-finite loss."""


class CheckpointError(UrgentBayesError, ValueError):
    """A checkpoint file is truncated, of the wrong version, or inconsistent."""


class InsufficientDataError(UrgentBayesError, ValueError):
    """Too few usable observations for a statistical test."""
