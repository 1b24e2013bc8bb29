"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class GazecastError(Exception):
    """Base class for all errors raised by gazecast."""


class DomainError(GazecastError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class DataError(GazecastError):
    """Input files are missing, malformed, or inconsistent."""


class SessionFormatError(DataError):
    """A session file failed validation. ``row`` is the 1-based line number, if known."""

    def __init__(self, message, path=None, row=None):
        self.path = path
        self.row = row
        where = ""
        if path is not None:
            where = f"{path}"
            if row is not None:
                where += f":{row}"
            where += ": "
        super().__init__(where + message)


class MissingGazeError(DataError):
    """Ground-truth gaze is absent for a frame inside a prediction horizon."""


class NumericError(GazecastError, ArithmeticError):
    """Training produced non-finite values."""
