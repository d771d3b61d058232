from __future__ import annotations

import sys

from loguru import logger as log

LOG_FORMAT = "<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"


def build_logger(level: str = "INFO", *, colorize: bool | None = None) -> int:
    """Replace loguru's default sink with a single stderr sink at ``level``.

    Returns the sink id so callers can remove it again.

    """
    log.remove()
    return log.add(sys.stderr, level=level, format=LOG_FORMAT, colorize=colorize, backtrace=False, diagnose=False)
