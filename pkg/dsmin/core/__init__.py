"""Core module initialization"""
from dsmin.core.config import settings
from dsmin.core.logger import logger
from dsmin.core.errors import (
    DSMinError,
    InputError,
    DataParseError,
    UnsupportedError,
    ConfigError,
    TraceParseError,
)

__all__ = [
    "settings",
    "logger",
    "DSMinError",
    "InputError",
    "DataParseError",
    "UnsupportedError",
    "ConfigError",
    "TraceParseError",
]
