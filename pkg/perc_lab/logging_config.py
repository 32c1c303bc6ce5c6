# perc_lab/logging_config.py

import json
import logging
import os
from typing import Optional

try:
    import colorlog
except ImportError:
    colorlog = None  # Handle absence gracefully

DATE_FORMAT = "%Y-%m-%dT%H:%M:%S"
LEVEL_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "bold_red",
}


class RunContextFilter(logging.Filter):
    """Stamps every record with the run tag (a config-hash prefix, or '-')."""

    def __init__(self, run_tag: Optional[str] = None):
        super().__init__()
        self.run_tag = run_tag or "-"

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_tag = self.run_tag
        return True


class JsonLineFormatter(logging.Formatter):
    """One JSON object per record: timestamp, level, run, logger, message."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "timestamp": self.formatTime(record, DATE_FORMAT),
            "level": record.levelname,
            "run": getattr(record, "run_tag", "-"),
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry)


def _console_handler() -> logging.Handler:
    handler = logging.StreamHandler()
    if colorlog:
        handler.setFormatter(colorlog.ColoredFormatter(
            fmt="%(log_color)s%(levelname)s%(reset)s [%(run_tag)s]: %(message)s",
            datefmt=DATE_FORMAT,
            log_colors=LEVEL_COLORS,
        ))
    else:
        handler.setFormatter(logging.Formatter(fmt="%(levelname)s [%(run_tag)s]: %(message)s", datefmt=DATE_FORMAT))
    return handler


def _json_handler(json_file_path: str) -> logging.Handler:
    os.makedirs(os.path.dirname(os.path.abspath(json_file_path)), exist_ok=True)
    handler = logging.FileHandler(json_file_path, mode="a", encoding="utf-8")
    handler.setFormatter(JsonLineFormatter())
    return handler


def configure_logging(
    json_file_path: str, verbose: bool = False, run_tag: Optional[str] = None
) -> None:
    """
    Sets up dual logging on the root logger, replacing any existing handlers:
      1) Console handler on stderr (color if colorlog is installed, else plain text).
      2) File handler writing JSON lines.

    Data products never go through logging; they are written to output files.
    """
    logger = logging.getLogger()
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    context_filter = RunContextFilter(run_tag)
    for handler in (_console_handler(), _json_handler(json_file_path)):
        handler.addFilter(context_filter)
        logger.addHandler(handler)
