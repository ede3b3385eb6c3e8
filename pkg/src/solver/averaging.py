"""
Averaged coefficients and the deterministic averaged equation.

For a frozen slow field xi the fast process has a Gaussian invariant law whose
pointwise marginal at x is Normal(xi(x), c(x)). The friction acts pointwise on
the field value, so the averaged coefficients only need these marginals:

    abar(xi)(x)     = E[ int_Y alpha(y, Z_x) dy ]
    abar_eps(xi)(x) = E[ alpha(x/eps, Z_x) ]          Z_x ~ Normal(xi(x), c(x))

With the separable family both reduce to alpha0 + sum_j (g_j term) E[h_j(Z_x)],
and the expectations are tensor Gauss-Hermite sums.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.special import roots_jacobi

from src.galerkin.basis import GalerkinBasis, evaluate_on_grid, as_components, weighted_mass_matrix
from src.galerkin.coefficient import (
    CoefficientSpec,
    cell_average,
    cell_means,
    check_resolution,
    fast_response_values,
    oscillating_cell_values,
)
from src.solver.slowsolver import Problem, Trajectory, _Recorder, slow_step
from src.stochastic.fastproc import NoiseModel, invariant_marginals, transient_marginals
from src.utils.errors import PicardConvergenceError
from src.utils.io import sha256_hex
from src.utils.logs import log_message

DEFAULT_GH_NODES = 20
DEFAULT_TIME_NODES = 64


def _gh_rule(n_nodes: int):
    """Probabilists' Gauss-Hermite nodes with weights normalised to sum to 1."""
    if n_nodes < 2:
        raise ValueError(f"n_nodes must be at least 2, got {n_nodes}")
    nodes, weights = hermegauss(n_nodes)
    return nodes, weights / np.sqrt(2.0 * np.pi)


def _cov_factor(covs: np.ndarray) -> np.ndarray:
    """Symmetric square roots L with L L^T = cov for a batch (..., d, d); rejects non-PSD input."""
    sym = 0.5 * (covs + np.swapaxes(covs, -1, -2))
    if not np.allclose(sym, covs, rtol=1e-10, atol=1e-14):
        raise ValueError("covariance is not symmetric")
    vals, vecs = np.linalg.eigh(sym)
    scale = np.maximum(np.max(np.abs(vals), axis=-1, keepdims=True), 1e-300)
    if np.any(vals < -1e-10 * scale):
        raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {vals.min():.3e})")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))[..., None, :]


def _gh_points(means: np.ndarray, covs: np.ndarray, n_nodes: int):
    """Quadrature points (..., N, d) and weights (N,) for a batch of Gaussians."""
    d = means.shape[-1]
    if d > 2:
        raise ValueError(f"tensor Gauss-Hermite supports at most 2 dimensions, got {d}")
    nodes, weights = _gh_rule(n_nodes)
    if d == 1:
        grid = nodes[:, None]
        w = weights
    else:
        nx, ny = np.meshgrid(nodes, nodes, indexing='ij')
        grid = np.stack([nx.ravel(), ny.ravel()], axis=1)
        w = np.outer(weights, weights).ravel()
    factor = _cov_factor(covs)
    points = means[..., None, :] + np.einsum('...ij,nj->...ni', factor, grid)
    return points, w


def gauss_hermite_expectation(g: Callable, mean, cov, n_nodes: int = DEFAULT_GH_NODES) -> float:
    """
    E[g(Z)] for Z ~ Normal(mean, cov) by tensor Gauss-Hermite quadrature.

    Exact for polynomials of degree <= 2 n_nodes - 1 per axis. g receives an
    array of points (N, d) and returns (N,) values; 1d calls may pass scalars
    for mean and cov.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.asarray(cov, dtype=float).reshape(mean.size, mean.size)
    points, w = _gh_points(mean, cov, n_nodes)
    values = np.asarray(g(points), dtype=float).reshape(w.shape)
    return float(w @ values)


def expected_responses(spec: CoefficientSpec, means: np.ndarray, covs: np.ndarray,
                       n_nodes: int = DEFAULT_GH_NODES) -> np.ndarray:
    """E[h_j(Z_x)] for every term j and grid point x, shape (n_terms, P)."""
    if not spec.terms:
        return np.zeros((0, means.shape[0]))
    points, w = _gh_points(means, covs, n_nodes)
    return np.stack([fast_response_values(t.h, points) @ w for t in spec.terms])


def _marginals(spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel, xi_coeffs):
    if spec.v_dim != basis.n_components:
        raise ValueError(f"coefficient v_dim={spec.v_dim} does not match basis components {basis.n_components}")
    return invariant_marginals(basis, noise, xi_coeffs)


def alpha_bar(spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel, xi_coeffs,
              n_nodes: int = DEFAULT_GH_NODES, cells_per_dim: Optional[int] = None) -> np.ndarray:
    """Averaged coefficient abar(xi) on the basis grid."""
    means, covs = _marginals(spec, basis, noise, xi_coeffs)
    out = np.full(basis.n_points, spec.alpha0)
    if spec.terms:
        out = out + cell_means(spec, cells_per_dim) @ expected_responses(spec, means, covs, n_nodes)
    return out


def alpha_bar_eps(spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel, eps: float, xi_coeffs,
                  n_nodes: int = DEFAULT_GH_NODES) -> np.ndarray:
    """Fast-averaged oscillating coefficient abar_eps(xi) on the basis grid."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    means, covs = _marginals(spec, basis, noise, xi_coeffs)
    out = np.full(basis.n_points, spec.alpha0)
    if spec.terms:
        cells = oscillating_cell_values(spec, basis, eps)
        out = out + np.sum(cells * expected_responses(spec, means, covs, n_nodes), axis=0)
    return out


def alpha_bar_monte_carlo(spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel, xi_coeffs,
                          n_samples: int, rng: np.random.Generator, point_indices=None,
                          cells_per_dim: Optional[int] = None):
    """
    Function-space Monte Carlo for abar: draw whole stationary fields
    (independent Normal(xi_k, q_k/2) per mode), cell-average pointwise.

    Returns:
        (mean, standard_error) at the selected grid points
    """
    xi = np.asarray(xi_coeffs, dtype=float)
    idx = np.arange(basis.n_points) if point_indices is None else np.asarray(point_indices, dtype=int)
    table = basis.eval_table[:, idx, :]
    coeffs = xi + np.sqrt(noise.stationary_variance) * rng.standard_normal((n_samples, basis.n_modes))
    fields = np.tensordot(coeffs, table, axes=(1, 0))
    if spec.v_dim == 1:
        fields = fields[..., 0]
    samples = cell_average(spec, fields, cells_per_dim)
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / np.sqrt(n_samples)


@dataclass
class AveragedCoefficientTable:
    """
    Tabulated abar for scalar fast values: values[p, j] = E[A(Z)] with
    Z ~ Normal(mean_grid[j], c(x_p)), interpolated in the mean by cubic splines.
    Means outside the tabulated range fall back to direct quadrature.
    """

    mean_grid: np.ndarray
    values: np.ndarray
    variances: np.ndarray
    n_nodes: int
    key: str
    spec: Optional[CoefficientSpec] = None

    @staticmethod
    def cache_key(spec: CoefficientSpec, noise: NoiseModel, basis: GalerkinBasis, n_nodes: int,
                  mean_grid: np.ndarray) -> str:
        grid_sig = f"{mean_grid[0]:.17g}:{mean_grid[-1]:.17g}:{mean_grid.size}"
        return sha256_hex(
            f"{spec.fingerprint}|{noise.fingerprint}|{basis.fingerprint}|{n_nodes}|{grid_sig}"
        )[:20]

    @classmethod
    def build(cls, spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel,
              mean_min: float, mean_max: float, n_means: int = 257,
              n_nodes: int = DEFAULT_GH_NODES) -> "AveragedCoefficientTable":
        if spec.v_dim != 1 or basis.n_components != 1:
            raise ValueError("AveragedCoefficientTable supports scalar fast values only")
        if not mean_max > mean_min or n_means < 4:
            raise ValueError(f"Need mean_max > mean_min and n_means >= 4, got {mean_min}, {mean_max}, {n_means}")
        mean_grid = np.linspace(mean_min, mean_max, n_means)
        _, covs = invariant_marginals(basis, noise, np.zeros(basis.n_modes))
        variances = covs[:, 0, 0]

        # every (point, mean) pair is an independent Gaussian expectation
        means = np.broadcast_to(mean_grid[None, :, None], (basis.n_points, n_means, 1))
        pair_covs = np.broadcast_to(variances[:, None, None, None], (basis.n_points, n_means, 1, 1))
        values = np.full((basis.n_points, n_means), spec.alpha0)
        if spec.terms:
            points, w = _gh_points(np.ascontiguousarray(means), np.ascontiguousarray(pair_covs), n_nodes)
            for mean_g, term in zip(cell_means(spec), spec.terms):
                values = values + mean_g * (fast_response_values(term.h, points) @ w)

        key = cls.cache_key(spec, noise, basis, n_nodes, mean_grid)
        return cls(mean_grid=mean_grid, values=values, variances=variances, n_nodes=n_nodes, key=key, spec=spec)

    def lookup(self, xi_field: np.ndarray) -> np.ndarray:
        """abar at each grid point for the scalar field xi sampled on the grid."""
        xi = np.asarray(xi_field, dtype=float).reshape(-1)
        if xi.size != self.values.shape[0]:
            raise ValueError(f"field has {xi.size} points, table has {self.values.shape[0]}")
        spline = CubicSpline(self.mean_grid, self.values, axis=1)
        # per-point evaluation of the piecewise cubic: coefficients (4, K-1, P)
        coef = spline.c
        seg = np.clip(np.searchsorted(self.mean_grid, xi, side='right') - 1, 0, self.mean_grid.size - 2)
        dx = xi - self.mean_grid[seg]
        p = np.arange(xi.size)
        out = ((coef[0, seg, p] * dx + coef[1, seg, p]) * dx + coef[2, seg, p]) * dx + coef[3, seg, p]

        outside = (xi < self.mean_grid[0]) | (xi > self.mean_grid[-1])
        if np.any(outside):
            if self.spec is None:
                raise ValueError("field leaves the tabulated range and the table carries no coefficient")
            means = xi[outside][:, None]
            covs = self.variances[outside][:, None, None]
            direct = np.full(means.shape[0], self.spec.alpha0)
            if self.spec.terms:
                direct = direct + cell_means(self.spec) @ expected_responses(self.spec, means, covs, self.n_nodes)
            out[outside] = direct
        return out

    def save(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"alpha_bar_{self.key}.npz"
        np.savez(
            path,
            mean_grid=self.mean_grid,
            values=self.values,
            variances=self.variances,
            n_nodes=np.array(self.n_nodes),
            key=np.array(self.key),
            spec_json=np.array(self.spec.model_dump_json() if self.spec is not None else ""),
        )
        return path

    @classmethod
    def load(cls, path: Path) -> "AveragedCoefficientTable":
        with np.load(Path(path), allow_pickle=False) as data:
            spec_json = str(data['spec_json'])
            return cls(
                mean_grid=data['mean_grid'],
                values=data['values'],
                variances=data['variances'],
                n_nodes=int(data['n_nodes']),
                key=str(data['key']),
                spec=CoefficientSpec.model_validate_json(spec_json) if spec_json else None,
            )

    @classmethod
    def load_or_build(cls, directory: Path, spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel,
                      mean_min: float, mean_max: float, n_means: int = 257,
                      n_nodes: int = DEFAULT_GH_NODES) -> "AveragedCoefficientTable":
        mean_grid = np.linspace(mean_min, mean_max, n_means)
        key = cls.cache_key(spec, noise, basis, n_nodes, mean_grid)
        path = Path(directory) / f"alpha_bar_{key}.npz"
        if path.exists():
            log_message(f"✓ Loaded averaged-coefficient table {path.name}", to_console=False)
            return cls.load(path)
        table = cls.build(spec, basis, noise, mean_min, mean_max, n_means, n_nodes)
        table.save(directory)
        log_message(f"✓ Cached averaged-coefficient table {path.name}", to_console=False)
        return table


def averaged_friction(problem: Problem, a, n_nodes: int = DEFAULT_GH_NODES,
                      table: Optional[AveragedCoefficientTable] = None) -> np.ndarray:
    """Friction matrix int abar(a) e_i . e_j dx."""
    if table is not None:
        values = table.lookup(evaluate_on_grid(problem.basis, a))
    else:
        values = alpha_bar(problem.spec, problem.basis, problem.noise, a, n_nodes=n_nodes)
    return weighted_mass_matrix(problem.basis, values)


def picard_step(problem: Problem, a_prev: np.ndarray, f: np.ndarray, guess: np.ndarray, step: int,
                tol: float = 1e-10, max_iter: int = 50, n_nodes: int = DEFAULT_GH_NODES,
                table: Optional[AveragedCoefficientTable] = None):
    """Fixed point x = slow_step(a_prev, A(abar(x)), f); returns (x, A, residual history)."""
    x = np.asarray(guess, dtype=float)
    residuals: List[float] = []
    for _ in range(max_iter):
        A = averaged_friction(problem, x, n_nodes, table)
        x_next = slow_step(a_prev, A, f, problem.dt, problem.basis)
        residuals.append(float(np.linalg.norm(x_next - x)))
        x = x_next
        if residuals[-1] <= tol * max(1.0, float(np.linalg.norm(x))):
            return x, A, residuals
    raise PicardConvergenceError(step, residuals)


def solve_averaged(problem: Problem, picard: bool = False, tol: float = 1e-10, max_iter: int = 50,
                   n_nodes: int = DEFAULT_GH_NODES,
                   table: Optional[AveragedCoefficientTable] = None) -> Trajectory:
    """
    Deterministic averaged run on the problem's basis, grid and dt.

    Lagged mode assembles the friction from abar of the previous step; Picard
    mode iterates each step to `tol` (at most `max_iter` iterations).
    """
    dt = problem.dt
    a = problem.u0.copy()
    recorder = _Recorder(problem.basis, problem.snapshot_stride, keep_fast=False)
    recorder.record(0, 0.0, a, averaged_friction(problem, a, n_nodes, table))

    for n in range(1, problem.n_steps + 1):
        f = problem.forcing.at((n - 1) * dt)
        if picard:
            a, A, _ = picard_step(problem, a, f, a, n, tol, max_iter, n_nodes, table)
        else:
            A = averaged_friction(problem, a, n_nodes, table)
            a = slow_step(a, A, f, dt, problem.basis)
        recorder.record(n, n * dt, a, A)

    return recorder.build(None, "averaged_picard" if picard else "averaged")


def picard_uniqueness_check(problem: Problem, n_steps: Optional[int] = None, tol: float = 1e-12,
                            max_iter: int = 50, n_nodes: int = DEFAULT_GH_NODES) -> float:
    """
    Max over steps of the distance between Picard solutions started from two
    distinct guesses (the previous state, and a shifted copy of it).
    """
    steps = problem.n_steps if n_steps is None else min(int(n_steps), problem.n_steps)
    dt = problem.dt
    a = problem.u0.copy()
    shift = np.ones(problem.basis.n_modes) / np.sqrt(problem.basis.n_modes)
    worst = 0.0
    for n in range(1, steps + 1):
        f = problem.forcing.at((n - 1) * dt)
        offset = 0.5 * max(1.0, float(np.linalg.norm(a)))
        x1, _, _ = picard_step(problem, a, f, a, n, tol, max_iter, n_nodes)
        x2, _, _ = picard_step(problem, a, f, a + offset * shift, n, tol, max_iter, n_nodes)
        worst = max(worst, float(np.linalg.norm(x1 - x2)))
        a = x1
    return worst


def _semigroup_fluctuation(spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel,
                           eta, xi, weight: np.ndarray, cells: np.ndarray, stationary: np.ndarray,
                           t: float, n_nodes: int) -> float:
    """P_t F(eta) = sum_j int g_j(x/eps) (E_t[h_j] - E_inf[h_j]) xi . phi dx."""
    means, covs = transient_marginals(basis, noise, eta, xi, t)
    transient = expected_responses(spec, means, covs, n_nodes)
    return float(np.sum(cells * (transient - stationary) * weight))


def resolvent_psi(spec: CoefficientSpec, basis: GalerkinBasis, noise: NoiseModel, eta_coeffs, xi_coeffs,
                  phi_coeffs, eps: float, decay_rate: Optional[float] = None,
                  n_time_nodes: int = DEFAULT_TIME_NODES, n_gh_nodes: int = DEFAULT_GH_NODES,
                  t_max: Optional[float] = None) -> float:
    """
    Resolvent corrector Psi(eta, xi) = int_0^inf e^{-c t} P_t F(eta) dt with

        F(v) = int_D (alpha(x/eps, v) - abar_eps(xi)) xi . phi dx

    and c = sqrt(eps) unless `decay_rate` is given. P_t F is evaluated in
    closed form from the Gaussian transient law of the frozen process. The
    time integral maps s = e^{-t} onto (0, 1] and uses Gauss-Jacobi nodes for
    the weight s^{c-1}; with `t_max` the truncated integral is computed with
    16-point Gauss-Legendre panels of unit length instead.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    c = float(np.sqrt(eps)) if decay_rate is None else float(decay_rate)
    if not c > 0:
        raise ValueError(f"decay_rate must be positive, got {decay_rate}")
    if spec.v_dim != basis.n_components:
        raise ValueError(f"coefficient v_dim={spec.v_dim} does not match basis components {basis.n_components}")
    if not spec.terms:
        return 0.0
    check_resolution(eps, basis.grid_points_per_dim)

    xi = np.asarray(xi_coeffs, dtype=float)
    eta = np.asarray(eta_coeffs, dtype=float)
    xi_field = as_components(basis, evaluate_on_grid(basis, xi))
    phi_field = as_components(basis, evaluate_on_grid(basis, phi_coeffs))
    weight = basis.weights * np.sum(xi_field * phi_field, axis=1)
    cells = oscillating_cell_values(spec, basis, eps)
    means, covs = invariant_marginals(basis, noise, xi)
    stationary = expected_responses(spec, means, covs, n_gh_nodes)

    def integrand(t: float) -> float:
        return _semigroup_fluctuation(spec, basis, noise, eta, xi, weight, cells, stationary, t, n_gh_nodes)

    if t_max is not None:
        if not t_max > 0:
            raise ValueError(f"t_max must be positive, got {t_max}")
        nodes, weights = leggauss(16)
        n_panels = int(np.ceil(t_max))
        edges = np.linspace(0.0, t_max, n_panels + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            for x, w in zip(nodes, weights):
                t = lo + half * (x + 1.0)
                total += half * w * np.exp(-c * t) * integrand(t)
        return float(total)

    x, w = roots_jacobi(n_time_nodes, 0.0, c - 1.0)
    s = 0.5 * (1.0 + x)
    total = sum(wi * integrand(-np.log(si)) for si, wi in zip(s, w))
    return float(2.0 ** (-c) * total)
