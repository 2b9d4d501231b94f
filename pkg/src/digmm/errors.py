"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``DataError`` (bad input, exit 2) and ``NumericError`` (the numerics gave
up, exit 3).
"""


class DigmmError(Exception):
    """Base class for every error raised by this package."""


class DataError(DigmmError, ValueError):
    pass


class NumericError(DigmmError, ArithmeticError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class NonSymmetric(DataError):
    pass


class TooFewSamples(DataError):
    pass


class MissingLabels(DataError):
    pass


class SingleClass(DataError):
    pass


class DimensionNotTwo(DataError):
    pass


class InfeasiblePoint(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NonFiniteValue(ParseError):
    pass


class RaggedRows(ParseError):
    pass


class SchemaError(DataError):
    pass


class VersionError(SchemaError):
    pass


class InvariantViolation(DataError):
    pass


class NotPositiveDefinite(NumericError):
    pass


class DegenerateData(NumericError):
    pass


class Infeasible(NumericError):
    pass


class RejectionStall(NumericError):
    pass


class NoConvergenceWarning(UserWarning):
    """The dual solver hit its pass budget; the best iterate is returned."""
