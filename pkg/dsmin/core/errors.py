from typing import Optional


class DSMinError(Exception):
    """Base class for all dsmin errors"""


class InputError(DSMinError, ValueError):
    """Malformed input: bad indices, NaN vectors, points outside the box"""


class DataParseError(InputError):
    """A data cell could not be parsed as binary"""
    
    def __init__(self, message: str, row: int, column: str):
        super().__init__(f"{message} (row {row}, column {column!r})")
        self.row = row
        self.column = column


class UnsupportedError(DSMinError):
    """Operation not available for this input (size caps, missing bounds)"""


class ConfigError(DSMinError):
    """Invalid experiment configuration or override"""


class TraceParseError(DSMinError):
    """A stored trace file is corrupt"""
    
    def __init__(self, message: str, path: str, line: Optional[int] = None):
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
