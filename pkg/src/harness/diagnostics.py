"""
Fluctuation diagnostics along a run.

With test functions phi (a basis field) and psi(t) (default 1 - t/T):

    S1 = int int (alpha^eps(v^eps) - abar_eps(u^eps)) u^eps . phi psi dx dt
    S2 = int int (abar_eps(u^eps) u^eps - abar_eps(ubar) ubar) . phi psi dx dt
    S3 = int int (abar_eps(ubar) - abar(ubar)) ubar . phi psi dx dt

and S1 + S2 + S3 equals the total fluctuation
int int (alpha^eps(v^eps) u^eps - abar(ubar) ubar) . phi psi dx dt on the same time samples.
"""

from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from src.galerkin.basis import GalerkinBasis, as_components, evaluate_on_grid
from src.galerkin.coefficient import CoefficientSpec, alpha_eps_on_grid
from src.solver.averaging import DEFAULT_GH_NODES, alpha_bar, alpha_bar_eps
from src.solver.slowsolver import Trajectory
from src.stochastic.fastproc import NoiseModel
from src.utils.errors import MissingSnapshotsError

PsiFunction = Callable[[np.ndarray], np.ndarray]


def default_psi(T: float) -> PsiFunction:
    """psi(t) = 1 - t/T, smooth with psi(T) = 0."""
    return lambda t: 1.0 - np.asarray(t, dtype=float) / T


def _psi_values(psi: Optional[PsiFunction], times: np.ndarray, T: float) -> np.ndarray:
    fn = default_psi(T) if psi is None else psi
    return np.asarray(fn(times), dtype=float)


def _pairing(basis: GalerkinBasis, coefficient: np.ndarray, u_coeffs, phi_field: np.ndarray) -> float:
    """int_D coefficient(x) u(x) . phi(x) dx on the grid."""
    u = as_components(basis, evaluate_on_grid(basis, u_coeffs))
    return float(np.sum(basis.weights * coefficient * np.sum(u * phi_field, axis=1)))


def _snapshot_steps(trajectory: Trajectory) -> np.ndarray:
    if not trajectory.has_snapshots:
        raise MissingSnapshotsError("trajectory kept no fast-field snapshots")
    if trajectory.fast_snapshots.shape[0] < 2:
        raise MissingSnapshotsError("at least two fast-field snapshots are needed for time quadrature")
    return trajectory.snapshot_steps


def _time_integral(values: Sequence[float], times: np.ndarray, psi: Optional[PsiFunction], T: float) -> float:
    return float(trapezoid(np.asarray(values) * _psi_values(psi, times, T), times))


def s1_diagnostic(trajectory: Trajectory, spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel,
                  eps: float, phi_coeffs, psi: Optional[PsiFunction] = None,
                  n_nodes: int = DEFAULT_GH_NODES) -> float:
    """Fluctuation of the fast friction about its frozen-slow average, on the snapshot steps."""
    steps = _snapshot_steps(trajectory)
    phi = as_components(basis, evaluate_on_grid(basis, phi_coeffs))
    values = []
    for row, step in enumerate(steps):
        u = trajectory.coeffs[step]
        v_field = evaluate_on_grid(basis, trajectory.fast_snapshots[row])
        fluct = alpha_eps_on_grid(spec, basis, eps, v_field) - alpha_bar_eps(spec, basis, noise, eps, u, n_nodes)
        values.append(_pairing(basis, fluct, u, phi))
    return _time_integral(values, trajectory.times[steps], psi, trajectory.times[-1])


def s2_diagnostic(trajectory: Trajectory, u_bar: Trajectory, spec: CoefficientSpec, basis: GalerkinBasis,
                  noise: NoiseModel, eps: float, phi_coeffs, psi: Optional[PsiFunction] = None,
                  steps: Optional[np.ndarray] = None, n_nodes: int = DEFAULT_GH_NODES) -> float:
    """Difference of the averaged friction forces of u^eps and ubar."""
    if steps is None:
        steps = trajectory.snapshot_steps if trajectory.has_snapshots else np.arange(trajectory.times.size)
    _check_aligned(trajectory, u_bar)
    phi = as_components(basis, evaluate_on_grid(basis, phi_coeffs))
    values = []
    for step in steps:
        u, ub = trajectory.coeffs[step], u_bar.coeffs[step]
        values.append(
            _pairing(basis, alpha_bar_eps(spec, basis, noise, eps, u, n_nodes), u, phi)
            - _pairing(basis, alpha_bar_eps(spec, basis, noise, eps, ub, n_nodes), ub, phi)
        )
    return _time_integral(values, trajectory.times[steps], psi, trajectory.times[-1])


def s3_diagnostic(u_bar: Trajectory, spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel,
                  eps: float, phi_coeffs, psi: Optional[PsiFunction] = None,
                  steps: Optional[np.ndarray] = None, n_nodes: int = DEFAULT_GH_NODES) -> float:
    """Two-scale averaging residual along the averaged solution; deterministic."""
    if steps is None:
        steps = np.arange(u_bar.times.size)
    phi = as_components(basis, evaluate_on_grid(basis, phi_coeffs))
    values = []
    for step in steps:
        ub = u_bar.coeffs[step]
        gap = alpha_bar_eps(spec, basis, noise, eps, ub, n_nodes) - alpha_bar(spec, basis, noise, ub, n_nodes)
        values.append(_pairing(basis, gap, ub, phi))
    return _time_integral(values, u_bar.times[steps], psi, u_bar.times[-1])


def total_fluctuation(trajectory: Trajectory, u_bar: Trajectory, spec: CoefficientSpec, basis: GalerkinBasis,
                      noise: NoiseModel, eps: float, phi_coeffs, psi: Optional[PsiFunction] = None,
                      n_nodes: int = DEFAULT_GH_NODES) -> float:
    """int int (alpha^eps(v^eps) u^eps - abar(ubar) ubar) . phi psi on the snapshot steps."""
    steps = _snapshot_steps(trajectory)
    _check_aligned(trajectory, u_bar)
    phi = as_components(basis, evaluate_on_grid(basis, phi_coeffs))
    values = []
    for row, step in enumerate(steps):
        u, ub = trajectory.coeffs[step], u_bar.coeffs[step]
        v_field = evaluate_on_grid(basis, trajectory.fast_snapshots[row])
        values.append(
            _pairing(basis, alpha_eps_on_grid(spec, basis, eps, v_field), u, phi)
            - _pairing(basis, alpha_bar(spec, basis, noise, ub, n_nodes), ub, phi)
        )
    return _time_integral(values, trajectory.times[steps], psi, trajectory.times[-1])


def _check_aligned(trajectory: Trajectory, u_bar: Trajectory):
    if trajectory.times.shape != u_bar.times.shape or not np.allclose(trajectory.times, u_bar.times):
        raise ValueError("eps-trajectory and averaged trajectory must share the time grid")


def l2v_error(trajectory: Trajectory, u_bar: Trajectory, basis: GalerkinBasis) -> float:
    """||u^eps - ubar||_{L2(0,T;V)} with the stiffness V-norm and trapezoid in time."""
    _check_aligned(trajectory, u_bar)
    diff = trajectory.coeffs - u_bar.coeffs
    v2 = np.sum(basis.stiffness_diag * diff * diff, axis=1)
    return float(np.sqrt(trapezoid(v2, trajectory.times)))
