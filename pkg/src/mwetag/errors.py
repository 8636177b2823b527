"""Shared exception types. Everything a CLI run reports as a data error derives
from DataError, so the command layer can map them to one exit code."""


class DataError(Exception):
    """Problem with user-supplied data or files (exit code 2 at the CLI)."""


class CuptParseError(DataError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class CuptWriteError(DataError):
    pass


class VecLoadError(DataError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ModelFormatError(DataError):
    pass


class EvaluationError(DataError):
    pass


class TrainingDataError(DataError):
    pass


class UsageError(Exception):
    """Bad or missing command-line flags; callers map this to exit code 1
    where data problems map to 2."""
