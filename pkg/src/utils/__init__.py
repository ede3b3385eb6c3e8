"""
Shared plumbing: domain errors, file output helpers and run logging.
"""

from src.utils.errors import (
    BrinkmanError,
    ConfigError,
    QuadratureResolutionError,
    SimulationError,
    SolverError,
    PicardConvergenceError,
    MissingSnapshotsError,
)
from src.utils.io import (
    utc_now_iso,
    write_json,
    sha256_hex,
    canonical_json,
    format_float,
    write_csv_rows,
)
from src.utils.logs import setup_log_file, log_message, close_log_file

__all__ = [
    'BrinkmanError',
    'ConfigError',
    'QuadratureResolutionError',
    'SimulationError',
    'SolverError',
    'PicardConvergenceError',
    'MissingSnapshotsError',
    'utc_now_iso',
    'write_json',
    'sha256_hex',
    'canonical_json',
    'format_float',
    'write_csv_rows',
    'setup_log_file',
    'log_message',
    'close_log_file',
]
