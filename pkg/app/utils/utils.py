"""Utility functions for the Ratchet PGD toolkit."""

import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, Optional, Union

from app.config import LOG_FILE, LOG_FORMAT, LOG_LEVEL

# Set up logging
logger = logging.getLogger(__name__)

_HANDLER_TAG = "_ratchet_handler"


def setup_logging(level: Optional[str] = None, log_file: Optional[Union[str, Path]] = LOG_FILE) -> None:
    """
    Install one stream handler and one file handler on the root logger.

    Args:
        level: Logging level name; defaults to LOG_LEVEL
        log_file: File receiving the same records, or None for console only
    """
    root = logging.getLogger()
    root.setLevel((level or LOG_LEVEL).upper())
    for handler in list(root.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            root.removeHandler(handler)
            handler.close()

    formatter = logging.Formatter(LOG_FORMAT)
    handlers = [logging.StreamHandler()]
    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    for handler in handlers:
        handler.setFormatter(formatter)
        setattr(handler, _HANDLER_TAG, True)
        root.addHandler(handler)


def config_hash(config: Union[str, Dict[str, Any]]) -> str:
    """
    SHA-256 of a configuration in canonical JSON form.

    Args:
        config: JSON text or a plain dict

    Returns:
        Hex digest, identical for configs that differ only in key order or spacing
    """
    data = json.loads(config) if isinstance(config, str) else config
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Timer:
    """Named wall-clock timings collected as a dict of seconds."""

    def __init__(self):
        self.timings: Dict[str, float] = {}

    def section(self, name: str) -> "_Section":
        return _Section(self, name)


class _Section:
    def __init__(self, timer: Timer, name: str):
        self.timer = timer
        self.name = name
        self.start = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        elapsed = time.perf_counter() - self.start
        self.timer.timings[self.name] = self.timer.timings.get(self.name, 0.0) + elapsed
        logger.debug(f"{self.name} took {elapsed:.3f} s")
        return False
