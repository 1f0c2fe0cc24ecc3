import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv

__all__ = ["LOG_ENV_VAR", "configure_logging"]

LOG_ENV_VAR = "ALMOSTISS_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR"}


def configure_logging(debug: bool = False, level: Optional[str] = None) -> int:
    """
    Install a stderr handler on the package logger.

    The level comes from ``level``, then ALMOSTISS_LOG (a .env file in the
    working directory is honoured), then WARNING. ``debug`` forces DEBUG.

    Returns:
        int: The numeric level that was applied
    """
    load_dotenv()
    name = (level or os.getenv(LOG_ENV_VAR) or "WARNING").strip().upper()
    if name not in _LEVELS:
        print(f"Ignoring unknown {LOG_ENV_VAR} value {name!r}", file=sys.stderr)
        name = "WARNING"
    numeric = logging.DEBUG if debug else getattr(logging, name)

    package_logger = logging.getLogger("almostiss")
    package_logger.setLevel(numeric)
    if not any(getattr(h, "_almostiss", False) for h in package_logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._almostiss = True
        package_logger.addHandler(handler)
    return numeric
