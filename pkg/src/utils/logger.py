"""
Logging configuration for the TSN desk toolkit

Console logs go to stderr. Stdout carries command results only (score
summaries, checkpoint paths, gradcheck reports), so it stays parseable.
"""

import logging
import sys
from pathlib import Path
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
# Snippets are decoded on worker threads; debug lines say which one
DEBUG_FORMAT = '%(asctime)s - %(name)s [%(threadName)s] - %(levelname)s - %(message)s'

QUIET_LOGGERS = ('matplotlib', 'PIL')


def setup_logging(
    level: str = "INFO",
    debug: bool = False,
    log_file: Optional[str] = None,
    quiet: bool = False,
    enable_colors: bool = True,
):
    """
    Setup logging configuration

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR)
        debug: Enable debug mode, overrides ``level`` and ``quiet``
        log_file: Optional log file path, always written at the full level
        quiet: Console shows warnings and errors only
        enable_colors: Enable colored output on a terminal
    """
    if debug:
        log_level = logging.DEBUG
    else:
        log_level = getattr(logging, level.upper(), logging.INFO)
    console_level = logging.WARNING if quiet and not debug else log_level
    pattern = DEBUG_FORMAT if debug else LOG_FORMAT

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(console_level)
    if enable_colors and sys.stderr.isatty():
        console_handler.setFormatter(ColoredFormatter(pattern))
    else:
        console_handler.setFormatter(logging.Formatter(pattern))
    root_logger.addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path)
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter(DEBUG_FORMAT))
        root_logger.addHandler(file_handler)

    # numpy overflow / invalid-value RuntimeWarnings end up in the log file too
    logging.captureWarnings(True)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


class ColoredFormatter(logging.Formatter):
    """Colored log formatter"""

    COLORS = {
        'DEBUG': '\033[36m',     # Cyan
        'INFO': '\033[32m',      # Green
        'WARNING': '\033[33m',   # Yellow
        'ERROR': '\033[31m',     # Red
        'CRITICAL': '\033[35m',  # Magenta
    }
    RESET = '\033[0m'

    def format(self, record):
        levelname = record.levelname
        if levelname in self.COLORS:
            record.levelname = f"{self.COLORS[levelname]}{levelname}{self.RESET}"
        try:
            formatted = super().format(record)
        finally:
            # handlers after this one (the log file) see the plain name
            record.levelname = levelname

        if levelname in ('ERROR', 'CRITICAL'):
            return f"❌ {formatted}"
        if levelname == 'WARNING':
            return f"⚠️ {formatted}"
        if levelname == 'DEBUG':
            return f"🔍 {formatted}"
        return formatted
