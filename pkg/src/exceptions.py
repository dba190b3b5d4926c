"""
Toolkit Exceptions
"""

from typing import Optional


class ToolkitException(Exception):
    """Base toolkit exception"""

    exit_code = 2


class ConfigError(ToolkitException):
    """Unknown or invalid configuration key/value"""

    exit_code = 1


class UsageError(ToolkitException):
    """Bad command line"""

    exit_code = 1


class DataError(ToolkitException):
    """Data content violates a contract (unknown tag, dictionary mismatch, ...)"""
    pass


class IngestionError(DataError):
    """Corpus could not be ingested"""
    pass


class SplitError(DataError):
    """Corpus could not be split"""
    pass


class ParseError(DataError):
    """Input file could not be parsed"""

    def __init__(self, message: str, path: Optional[str] = None, line_no: Optional[int] = None):
        location = ''
        if path is not None:
            location = f"{path}:{line_no}: " if line_no is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line_no = line_no


class PersistError(ToolkitException):
    """Model file error"""
    pass


class FormatError(PersistError):
    """Not a model file"""
    pass


class CorruptionError(PersistError):
    """Model file is truncated or fails its checksum"""
    pass


class VersionError(PersistError):
    """Unsupported model file version"""
    pass


class KindError(PersistError):
    """Model file holds another kind of model than expected"""
    pass


class NumericError(ToolkitException):
    """Numeric engine error"""
    pass


class ShapeError(NumericError):
    """Dimension mismatch or missing forward cache"""
    pass


class InputError(NumericError):
    """Invalid operation input (id out of range, empty sequence)"""
    pass


class TrainingError(NumericError):
    """Non-finite loss or gradient during training"""

    exit_code = 3

    def __init__(self, message: str, lr: Optional[float] = None, step: Optional[int] = None):
        details = []
        if lr is not None:
            details.append(f"lr={lr:g}")
        if step is not None:
            details.append(f"step={step}")
        suffix = f" ({', '.join(details)})" if details else ''
        super().__init__(f"{message}{suffix}")
        self.lr = lr
        self.step = step
