"""Logging configuration for the lab."""

import logging
import sys
from typing import Any, Mapping, Optional

from app.core.config import get_settings

settings = get_settings()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
QUIET_LOGGERS = ("numpy", "scipy", "mpmath", "concurrent.futures")


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once per process.

    Records go to stderr so that ``--out -`` can stream reports on stdout.
    """
    name = (level or settings.log_level).upper()
    log_level = logging.getLevelName(name)
    if not isinstance(log_level, int):
        log_level = logging.INFO

    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(log_level)
    handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))

    root = logging.getLogger()
    root.setLevel(log_level)
    for existing in root.handlers[:]:
        root.removeHandler(existing)
    root.addHandler(handler)

    for noisy in QUIET_LOGGERS:
        logging.getLogger(noisy).setLevel(logging.WARNING)


def format_params(params: Mapping[str, Any]) -> str:
    """``key=value`` pairs in key order, for warning lines that must identify a run unit."""
    return ", ".join(f"{key}={params[key]}" for key in sorted(params))


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
