"""
Slow-equation stepping for the eps-system and the averaged equation.
"""

from src.solver.slowsolver import (
    ForcingProfile,
    Problem,
    CoupledState,
    Trajectory,
    EnergyReport,
    SplittingLadder,
    assemble_friction_matrix,
    slow_step,
    simulate_coupled,
    energy_diagnostics,
    splitting_ladder,
    aggregate_normals,
)
from src.solver.averaging import (
    AveragedCoefficientTable,
    gauss_hermite_expectation,
    expected_responses,
    alpha_bar,
    alpha_bar_eps,
    alpha_bar_monte_carlo,
    averaged_friction,
    solve_averaged,
    picard_step,
    picard_uniqueness_check,
    resolvent_psi,
)

__all__ = [
    'ForcingProfile',
    'Problem',
    'CoupledState',
    'Trajectory',
    'EnergyReport',
    'SplittingLadder',
    'assemble_friction_matrix',
    'slow_step',
    'simulate_coupled',
    'energy_diagnostics',
    'splitting_ladder',
    'aggregate_normals',
    'AveragedCoefficientTable',
    'gauss_hermite_expectation',
    'expected_responses',
    'alpha_bar',
    'alpha_bar_eps',
    'alpha_bar_monte_carlo',
    'averaged_friction',
    'solve_averaged',
    'picard_step',
    'picard_uniqueness_check',
    'resolvent_psi',
]
