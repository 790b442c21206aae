"""Exception hierarchy.

Two families matter to callers: configuration problems (bad flags, bad
parameters, missing files) and data problems (ragged input, zero variance,
degenerate geometry). The CLI maps them to exit codes 2 and 3.
"""


class ClimclustError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ClimclustError, ValueError):
    """Invalid parameters, flags or configuration files."""


class DataError(ClimclustError, ValueError):
    """Input data is malformed or numerically degenerate."""


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


class RaggedRowError(ParseError):
    """Rows of a wide CSV (or series of a long CSV) differ in length."""


class DatasetTooSmallError(DataError):
    pass


class ZeroVarianceError(DataError):
    """A series (or an overlap segment of it) is constant."""

    def __init__(self, message, record=None, lag=None):
        self.record = record
        self.lag = lag
        super().__init__(message)


class DegenerateDataError(DataError):
    pass


class BisectionError(DegenerateDataError):
    """Bandwidth search could not reach the requested perplexity."""


class PairError(DataError):
    """A distance kernel failed on a specific pair of rows."""

    def __init__(self, message, i, j):
        self.i = i
        self.j = j
        super().__init__(f"{message} [pair ({i}, {j})]")
