class SurvBoostError(Exception):
    """Base class for all errors raised by survboost."""


class DataError(SurvBoostError, ValueError):
    """Invalid input data."""


class SchemaError(DataError):
    """A column named in the schema is missing from the file."""


class ParseError(DataError):
    """A cell could not be parsed."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ValidationError(DataError):
    """Parsed values violate a precondition (negative duration, bad label...)."""


class ModelFormatError(SurvBoostError, ValueError):
    """A model file is truncated, malformed or of the wrong kind."""


class ModelVersionError(ModelFormatError):
    def __init__(self, found, expected):
        super().__init__(
            f"model format version {found!r} is not supported "
            f"(this build reads version {expected!r})"
        )
        self.found = found
        self.expected = expected
