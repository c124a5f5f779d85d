"""Exception types raised across the package.

Every error carries a short, stable ``reason`` token (``"insufficient data"``,
``"data row arity"``, ...) so callers and the CLI can branch on it without
parsing free text.
"""


class PefError(Exception):
    """Base class for all package errors."""

    def __init__(self, reason, detail=None):
        self.reason = reason
        self.detail = detail
        msg = reason if detail is None else f"{reason}: {detail}"
        super().__init__(msg)


class DataError(PefError, ValueError):
    """Input data cannot support the requested computation."""


class ArityError(DataError):
    """Mismatched lengths or dimensions."""

    def __init__(self, detail=None):
        super().__init__("arity", detail)


class DegenerateError(DataError):
    """Zero variance or zero range where a spread is required."""


class ParseError(PefError, ValueError):
    """Malformed LAS or CSV text.

    ``line`` is 1-based; ``column`` is the 1-based CSV column when known.
    """

    def __init__(self, reason, detail=None, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            detail = ", ".join(where) + ("" if detail is None else f": {detail}")
        super().__init__(reason, detail)


class UnknownCurveError(PefError, KeyError):
    def __init__(self, mnemonic):
        self.mnemonic = mnemonic
        PefError.__init__(self, "unknown curve", mnemonic)

    def __str__(self):
        return PefError.__str__(self)


class ModelError(PefError, RuntimeError):
    """A model could not be fitted, trained or loaded."""
