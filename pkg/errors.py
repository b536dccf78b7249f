from typing import Optional


class DDMPError(Exception):
    """Base class for every error raised by the disambiguation toolkit"""


class ConfigError(DDMPError, ValueError):
    """Invalid run parameters (CLI exit code 2)"""


class ShapeError(DDMPError, ValueError):
    """Array dimensions do not conform"""


class NumericError(DDMPError):
    """Non-finite values appeared during a computation"""

    def __init__(self, message: str, stage: Optional[str] = None):
        self.stage = stage
        if stage:
            message = f"{message} (in '{stage}')"
        super().__init__(message)


class DataError(DDMPError):
    """Dataset contents violate a partial-label invariant"""


class DataParseError(DataError):
    """Malformed PLD file"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(DDMPError):
    """Checkpoint container is missing, mismatched or of an unknown version"""
