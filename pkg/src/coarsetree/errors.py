"""Exception types shared across the package.

ValidationError and its subclasses signal bad input or configuration; the
CLI maps them to exit code 2. Everything else raised at runtime maps to 1.
"""


class CoarseTreeError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(CoarseTreeError):
    """Invalid data, parameters, or configuration supplied by the caller."""


class ParseError(ValidationError):
    """Malformed input file; message carries the offending row number."""


class GuardError(CoarseTreeError):
    """A solver was asked to exceed its documented size guard."""
