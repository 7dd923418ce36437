"""Exception hierarchy shared across the package."""


class MedCompleteError(Exception):
    """Base class for all package errors."""


class DomainError(MedCompleteError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class DegenerateCorrelationError(DomainError):
    """Correlation of magnitude one; the bivariate normal has no density."""


class FitError(MedCompleteError):
    """A regression fit could not be completed."""


class SingularDesignError(FitError):
    """Design matrix is rank deficient."""

    def __init__(self, column: str, message: str | None = None):
        self.column = column
        super().__init__(message or f"singular design: column {column!r} is collinear with earlier columns")


class SeparationError(FitError):
    """Logistic likelihood has no finite maximizer."""


class ParseError(MedCompleteError, ValueError):
    """Malformed input file; carries the offending row/column when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class StudyAbort(MedCompleteError):
    """A simulation study could not produce trustworthy metrics."""
