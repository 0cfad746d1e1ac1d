"""Exception types shared across the package."""


class NewsDesertsError(Exception):
    """Base class for all package errors."""


class ConfigError(NewsDesertsError):
    pass


class DomainError(NewsDesertsError):
    """An argument is outside the mathematical domain of an operation."""


# --- ingest ---

class MissingColumn(NewsDesertsError):
    pass


class BadValue(NewsDesertsError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateFips(NewsDesertsError):
    pass


class HttpError(NewsDesertsError):
    """Transport or status failure talking to the census API; retry-able."""

    def __init__(self, message, status=None, url=None):
        super().__init__(message)
        self.status = status
        self.url = url


class SchemaError(NewsDesertsError):
    pass


class MissingCounty(NewsDesertsError):
    pass


# --- features ---

class MissingField(NewsDesertsError):
    pass


class EmptySegmentWarning(UserWarning):
    """A population segment has no counties; its design columns are all zero."""


# --- model fitting ---

class RankDeficient(NewsDesertsError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class NotConverged(NewsDesertsError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class NotNested(NewsDesertsError):
    pass


class ColumnMismatch(NewsDesertsError):
    pass


# --- maps ---

class InvalidGeometry(NewsDesertsError):
    pass


class EmptyDocument(NewsDesertsError):
    pass


class GeometryMissingWarning(UserWarning):
    """Forecast records whose FIPS has no boundary geometry were skipped."""
