"""
Experiment harness: config, ensembles, diagnostics, validation suites and reports.
"""

from src.harness.config import (
    ExperimentConfig,
    load_config,
    parse_config,
    build_problem,
    config_hash,
    clean_env_value,
)
from src.harness.diagnostics import (
    s1_diagnostic,
    s2_diagnostic,
    s3_diagnostic,
    total_fluctuation,
    l2v_error,
)
from src.harness.ensemble import (
    CheckResult,
    PathResult,
    EpsilonSummary,
    SweepReport,
    run_ensemble,
    convergence_sweep,
)
from src.harness.validate import SuiteResult, SUITES, validate, psi_ladder

__all__ = [
    'ExperimentConfig',
    'load_config',
    'parse_config',
    'build_problem',
    'config_hash',
    'clean_env_value',
    's1_diagnostic',
    's2_diagnostic',
    's3_diagnostic',
    'total_fluctuation',
    'l2v_error',
    'CheckResult',
    'PathResult',
    'EpsilonSummary',
    'SweepReport',
    'run_ensemble',
    'convergence_sweep',
    'SuiteResult',
    'SUITES',
    'validate',
    'psi_ladder',
]
