"""
Fast Ornstein-Uhlenbeck process

    dv = -(1/eps)(v - u) dt + sqrt(Q/eps) dW

integrated exactly in distribution per Galerkin mode, with the slow field u
frozen over each step. Q is diagonal in the basis with eigenvalues q_k; the
stationary law of mode k is Normal(u_k, q_k / 2).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from src.galerkin.basis import GalerkinBasis, evaluate_on_grid, project
from src.utils.io import canonical_json, sha256_hex


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-mode eigenvalues q_k of the trace-class covariance Q."""

    q: np.ndarray
    decay_p: Optional[float] = None

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 1:
            raise ValueError(f"q must be a vector, got shape {q.shape}")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValueError("noise eigenvalues must be finite and nonnegative")
        q.flags.writeable = False
        object.__setattr__(self, 'q', q)

    @classmethod
    def from_decay(cls, basis: GalerkinBasis, q0: float, decay_p: float) -> "NoiseModel":
        """q_k = q0 |k|^(-p); p must exceed the spatial dimension."""
        if q0 < 0:
            raise ValueError(f"q0 must be nonnegative, got {q0}")
        if not decay_p > basis.dim:
            raise ValueError(f"decay_p={decay_p} must exceed the spatial dimension {basis.dim}")
        k_norm = np.linalg.norm(basis.mode_indices.astype(float), axis=1)
        return cls(q=q0 * k_norm ** (-float(decay_p)), decay_p=float(decay_p))

    @classmethod
    def from_list(cls, basis: GalerkinBasis, q_list: Sequence[float]) -> "NoiseModel":
        q = np.asarray(q_list, dtype=float)
        if q.shape != (basis.n_modes,):
            raise ValueError(f"q_list has {q.size} entries, basis has {basis.n_modes} modes")
        return cls(q=q)

    @classmethod
    def zero(cls, basis: GalerkinBasis) -> "NoiseModel":
        return cls(q=np.zeros(basis.n_modes))

    @property
    def n_modes(self) -> int:
        return int(self.q.size)

    @property
    def trace(self) -> float:
        return float(np.sum(self.q))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.q > 0)

    @property
    def stationary_variance(self) -> np.ndarray:
        return 0.5 * self.q

    @property
    def fingerprint(self) -> str:
        return sha256_hex(canonical_json([format(x, '.17g') for x in self.q]))[:16]


@dataclass(frozen=True, eq=False)
class FastState:
    """Fast coefficients b at time t; the grid cache is derived lazily and never stale."""

    basis: GalerkinBasis = field(repr=False)
    b: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.shape != (self.basis.n_modes,):
            raise ValueError(f"fast coefficients have shape {b.shape}, expected ({self.basis.n_modes},)")
        b.flags.writeable = False
        object.__setattr__(self, 'b', b)

    @classmethod
    def from_coefficients(cls, basis: GalerkinBasis, b, t: float = 0.0) -> "FastState":
        return cls(basis=basis, b=b, t=t)

    @classmethod
    def from_field(cls, basis: GalerkinBasis, field_on_grid, t: float = 0.0) -> "FastState":
        return cls(basis=basis, b=project(basis, field_on_grid), t=t)

    @cached_property
    def grid_cache(self) -> np.ndarray:
        return evaluate_on_grid(self.basis, self.b)

    @property
    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.b))


def _check_step(dt: float, eps: float):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")


def ou_transition(b: np.ndarray, u: np.ndarray, dt: float, eps: float, q: np.ndarray,
                  normals: np.ndarray) -> np.ndarray:
    """Exact transition b -> u + (b - u) e^{-dt/eps} + eta for given standard normals."""
    decay = np.exp(-dt / eps)
    std = np.sqrt(0.5 * q * -np.expm1(-2.0 * dt / eps))
    return u + (b - u) * decay + std * normals


def ou_exact_step(state: FastState, u_coeffs, dt: float, eps: float, noise: NoiseModel,
                  rng: np.random.Generator) -> FastState:
    """
    Advance the fast state by dt with u frozen.

    One standard normal is drawn per mode on every step, including zero-noise
    modes, so streams stay aligned across noise models.
    """
    _check_step(dt, eps)
    u = np.asarray(u_coeffs, dtype=float)
    if u.shape != state.b.shape:
        raise ValueError(f"u_coeffs has shape {u.shape}, expected {state.b.shape}")
    if noise.n_modes != state.b.size:
        raise ValueError(f"noise has {noise.n_modes} modes, state has {state.b.size}")
    normals = rng.standard_normal(state.b.size)
    b_next = ou_transition(state.b, u, dt, eps, noise.q, normals)
    return FastState(basis=state.basis, b=b_next, t=state.t + dt)


def invariant_marginal(basis: GalerkinBasis, noise: NoiseModel, xi_coeffs, x):
    """
    Law of the stationary fast value at a point x.

    Returns:
        (mean, covariance) with mean = sum xi_k e_k(x) and
        covariance = sum (q_k / 2) e_k(x) e_k(x)^T
    """
    xi = np.asarray(xi_coeffs, dtype=float)
    e = basis.mode_values(np.asarray(x, dtype=float).reshape(basis.dim))
    mean = xi @ e
    cov = np.einsum('k,ki,kj->ij', noise.stationary_variance, e, e)
    return mean, cov


def invariant_marginals(basis: GalerkinBasis, noise: NoiseModel, xi_coeffs):
    """Pointwise stationary laws on the whole grid: means (P, c), covariances (P, c, c)."""
    xi = np.asarray(xi_coeffs, dtype=float)
    means = np.tensordot(xi, basis.eval_table, axes=(0, 0))
    covs = np.einsum('k,kpi,kpj->pij', noise.stationary_variance, basis.eval_table, basis.eval_table)
    return means, covs


def transient_marginals(basis: GalerkinBasis, noise: NoiseModel, eta_coeffs, xi_coeffs, t: float):
    """
    Pointwise law of the frozen process started at eta, after unit-timescale time t.

    Mean eta e^{-t} + xi (1 - e^{-t}); covariance c(x)(1 - e^{-2t}).
    """
    eta = np.asarray(eta_coeffs, dtype=float)
    xi = np.asarray(xi_coeffs, dtype=float)
    decay = np.exp(-t)
    mean_coeffs = eta * decay + xi * (-np.expm1(-t))
    means = np.tensordot(mean_coeffs, basis.eval_table, axes=(0, 0))
    _, covs = invariant_marginals(basis, noise, xi)
    return means, covs * (-np.expm1(-2.0 * t))


def contraction_check(basis: GalerkinBasis, noise: NoiseModel, eta1, eta2, xi, T: float,
                      eps: float, dt: float, rng: np.random.Generator) -> float:
    """
    Max over steps of the relative deviation of ||v1(t) - v2(t)|| from
    e^{-t/eps} ||eta1 - eta2|| for two paths sharing every noise draw.

    With eta1 == eta2 the absolute difference is returned instead (it must be 0).
    """
    _check_step(dt, eps)
    seed = int(rng.integers(0, 2 ** 63 - 1))
    rng1, rng2 = np.random.default_rng(seed), np.random.default_rng(seed)
    xi = np.asarray(xi, dtype=float)
    s1 = FastState.from_coefficients(basis, eta1)
    s2 = FastState.from_coefficients(basis, eta2)
    gap0 = float(np.linalg.norm(s1.b - s2.b))

    worst = 0.0
    for n in range(1, int(round(T / dt)) + 1):
        s1 = ou_exact_step(s1, xi, dt, eps, noise, rng1)
        s2 = ou_exact_step(s2, xi, dt, eps, noise, rng2)
        gap = float(np.linalg.norm(s1.b - s2.b))
        if gap0 == 0.0:
            worst = max(worst, gap)
        else:
            expected = gap0 * np.exp(-n * dt / eps)
            worst = max(worst, abs(gap - expected) / expected)
    return worst


@dataclass
class MomentBoundReport:
    """Worst margin of the bound ||eta||^2 e^{-t} + ||xi||^2 + Tr Q over E||v(t)||^2."""

    margin: float
    standard_error: float
    worst_time: float
    times: np.ndarray
    estimates: np.ndarray
    bounds: np.ndarray

    def passed(self, n_se: float = 3.0) -> bool:
        return self.margin >= -n_se * self.standard_error


def moment_bound_check(basis: GalerkinBasis, noise: NoiseModel, eta, xi, T: float, n_paths: int,
                       rng: np.random.Generator, dt: float = 0.05) -> MomentBoundReport:
    """Ensemble check of the second-moment bound at the unit timescale (eps = 1)."""
    if n_paths < 100:
        raise ValueError(f"n_paths must be at least 100, got {n_paths}")
    _check_step(dt, 1.0)
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n_steps = int(round(T / dt))

    b = np.tile(eta, (n_paths, 1))
    times, estimates, errors, bounds = [], [], [], []
    for n in range(1, n_steps + 1):
        b = ou_transition(b, xi, dt, 1.0, noise.q, rng.standard_normal(b.shape))
        t = n * dt
        energy = np.sum(b * b, axis=1)
        times.append(t)
        estimates.append(float(np.mean(energy)))
        errors.append(float(np.std(energy, ddof=1) / np.sqrt(n_paths)))
        bounds.append(float(eta @ eta) * np.exp(-t) + float(xi @ xi) + noise.trace)

    margins = np.array(bounds) - np.array(estimates)
    worst = int(np.argmin(margins))
    return MomentBoundReport(
        margin=float(margins[worst]),
        standard_error=errors[worst],
        worst_time=times[worst],
        times=np.array(times),
        estimates=np.array(estimates),
        bounds=np.array(bounds),
    )


@dataclass
class StationaryVarianceReport:
    """Per-mode variance estimates of a long stationary run, with batch-means errors."""

    expected: np.ndarray
    estimates: np.ndarray
    standard_errors: np.ndarray
    n_batches: int
    point_expected: Optional[float] = None
    point_estimate: Optional[float] = None
    point_standard_error: Optional[float] = None

    @property
    def z_scores(self) -> np.ndarray:
        se = np.where(self.standard_errors > 0, self.standard_errors, np.inf)
        return np.abs(self.estimates - self.expected) / se

    def passed(self, n_se: float = 3.0) -> bool:
        ok = bool(np.all((self.z_scores <= n_se) | (self.estimates == self.expected)))
        if self.point_expected is not None:
            se = self.point_standard_error or np.inf
            ok = ok and abs(self.point_estimate - self.point_expected) <= n_se * se
        return ok


def stationary_variance_check(basis: GalerkinBasis, noise: NoiseModel, T: float, burn_in: float,
                              rng: np.random.Generator, eps: float = 1.0, dt: float = 0.05,
                              xi=None, batch_length: float = 10.0,
                              point=None) -> StationaryVarianceReport:
    """
    Long OU run with frozen mean xi; variances use the known mean and batch means
    over `batch_length` time units for the standard error. With `point`, the
    first component of v(point) is checked against the invariant marginal too.
    """
    _check_step(dt, eps)
    if not T > burn_in >= 0:
        raise ValueError(f"Need T > burn_in >= 0, got T={T}, burn_in={burn_in}")
    xi = np.zeros(basis.n_modes) if xi is None else np.asarray(xi, dtype=float)
    per_batch = max(1, int(round(batch_length / dt)))
    n_burn = int(round(burn_in / dt))
    n_batches = int(round((T - burn_in) / dt)) // per_batch
    if n_batches < 2:
        raise ValueError("Run is too short for two batches; increase T or reduce batch_length")

    e_point = None
    if point is not None:
        e_point = basis.mode_values(np.asarray(point, dtype=float).reshape(basis.dim))[:, 0]

    b = xi.copy()
    for _ in range(n_burn):
        b = ou_transition(b, xi, dt, eps, noise.q, rng.standard_normal(b.size))

    batch_means = np.zeros((n_batches, basis.n_modes))
    point_means = np.zeros(n_batches)
    for i in range(n_batches):
        acc = np.zeros(basis.n_modes)
        acc_point = 0.0
        for _ in range(per_batch):
            b = ou_transition(b, xi, dt, eps, noise.q, rng.standard_normal(b.size))
            dev = b - xi
            acc += dev * dev
            if e_point is not None:
                acc_point += float(dev @ e_point) ** 2
        batch_means[i] = acc / per_batch
        point_means[i] = acc_point / per_batch

    report = StationaryVarianceReport(
        expected=noise.stationary_variance.copy(),
        estimates=batch_means.mean(axis=0),
        standard_errors=batch_means.std(axis=0, ddof=1) / np.sqrt(n_batches),
        n_batches=n_batches,
    )
    if e_point is not None:
        report.point_expected = float(noise.stationary_variance @ (e_point * e_point))
        report.point_estimate = float(point_means.mean())
        report.point_standard_error = float(point_means.std(ddof=1) / np.sqrt(n_batches))
    return report
