import logging
from typing import Optional
from dsmin.core.config import settings
from dsmin.core.errors import ConfigError

handlers = [logging.StreamHandler()]
if settings.LOG_FILE:
    handlers.append(logging.FileHandler(settings.LOG_FILE))

# Configure logging
logging.basicConfig(
    level=logging.WARNING,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=handlers
)

logger = logging.getLogger("dsmin")


def configure(level: Optional[str] = None) -> None:
    """Set the dsmin log level (settings.LOG_LEVEL when level is None)"""
    name = (level or settings.LOG_LEVEL).upper()
    if not isinstance(logging.getLevelName(name), int):
        raise ConfigError(f"unknown log level {name!r}")
    logger.setLevel(name)


configure()
