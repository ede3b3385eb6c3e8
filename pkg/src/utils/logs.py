"""
Run logging: console lines plus a timestamped log file per command.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

_LOGGER_NAME = "brinkman"

logger = logging.getLogger(_LOGGER_NAME)
logger.setLevel(logging.INFO)
logger.propagate = False

# Global file handler
_file_handler: Optional[logging.FileHandler] = None


def setup_log_file(out_dir: Path, prefix: str = "run") -> Path:
    """Create <out_dir>/logs/<prefix>_<timestamp>.txt and attach it to the run logger."""
    global _file_handler
    close_log_file()

    logs_dir = Path(out_dir) / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_path = logs_dir / f"{prefix}_{timestamp}.txt"

    _file_handler = logging.FileHandler(log_path, encoding="utf-8")
    _file_handler.setFormatter(
        logging.Formatter("[%(asctime)s] %(message)s", datefmt="%Y-%m-%d %H:%M:%S")
    )
    logger.addHandler(_file_handler)
    return log_path


def close_log_file():
    global _file_handler
    if _file_handler is not None:
        logger.removeHandler(_file_handler)
        _file_handler.close()
        _file_handler = None


def log_message(message: str, to_console: bool = True, level: int = logging.INFO):
    """Write message to the log file (if open) and optionally to the console."""
    if _file_handler is not None:
        logger.log(level, message)
    if to_console:
        print(message)
