"""
Fast process: noise model, exact OU stepping and random streams.
"""

from src.stochastic.streams import spawn_rng, stream_key, FAST_NOISE
from src.stochastic.fastproc import (
    NoiseModel,
    FastState,
    ou_exact_step,
    ou_transition,
    invariant_marginal,
    invariant_marginals,
    transient_marginals,
    contraction_check,
    moment_bound_check,
    stationary_variance_check,
    MomentBoundReport,
    StationaryVarianceReport,
)

__all__ = [
    'spawn_rng',
    'stream_key',
    'FAST_NOISE',
    'NoiseModel',
    'FastState',
    'ou_exact_step',
    'ou_transition',
    'invariant_marginal',
    'invariant_marginals',
    'transient_marginals',
    'contraction_check',
    'moment_bound_check',
    'stationary_variance_check',
    'MomentBoundReport',
    'StationaryVarianceReport',
]
