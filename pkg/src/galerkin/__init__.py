"""
Galerkin spaces and the Brinkman coefficient.
"""

from src.galerkin.basis import (
    BasisKind,
    GalerkinBasis,
    build_basis,
    project,
    evaluate_on_grid,
    v_norm,
    h_norm,
    mass_matrix,
    stiffness_matrix,
    weighted_mass_matrix,
    spectral_divergence,
    analytic_divergence,
    unit_vector,
)
from src.galerkin.coefficient import (
    CellFunction,
    FastResponse,
    CellTerm,
    CoefficientSpec,
    eval_alpha,
    eval_alpha_eps,
    cell_average,
    check_resolution,
    two_scale_test,
)

__all__ = [
    'BasisKind',
    'GalerkinBasis',
    'build_basis',
    'project',
    'evaluate_on_grid',
    'v_norm',
    'h_norm',
    'mass_matrix',
    'stiffness_matrix',
    'weighted_mass_matrix',
    'spectral_divergence',
    'analytic_divergence',
    'unit_vector',
    'CellFunction',
    'FastResponse',
    'CellTerm',
    'CoefficientSpec',
    'eval_alpha',
    'eval_alpha_eps',
    'cell_average',
    'check_resolution',
    'two_scale_test',
]
