"""
Semi-implicit Galerkin stepper for the slow equation

    u_t = Laplace(u) - alpha^eps(x/eps, v) u + f

coupled to the fast OU field by Lie splitting: each step advances v exactly
with u frozen, refreshes the friction matrix from the new v, then solves

    (I + dt (Lambda + A)) a' = a + dt f(t_n)

with diffusion and friction implicit and the load explicit.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.galerkin.basis import GalerkinBasis, h_norm, v_norm, weighted_mass_matrix
from src.galerkin.coefficient import (
    CoefficientSpec,
    alpha_eps_on_grid,
    oscillating_cell_values,
)
from src.stochastic.fastproc import FastState, NoiseModel, ou_exact_step, ou_transition
from src.utils.errors import SimulationError, SolverError


@dataclass(frozen=True, eq=False)
class ForcingProfile:
    """Spatial load projected once, with an optional cos(2 pi frequency t) factor."""

    coeffs: np.ndarray
    frequency: Optional[float] = None

    @classmethod
    def zero(cls, basis: GalerkinBasis) -> "ForcingProfile":
        return cls(coeffs=np.zeros(basis.n_modes))

    def factor(self, t: float) -> float:
        if self.frequency is None:
            return 1.0
        return float(np.cos(2.0 * np.pi * self.frequency * t))

    def at(self, t: float) -> np.ndarray:
        return self.coeffs * self.factor(t)

    def norm_at(self, t: float) -> float:
        return abs(self.factor(t)) * float(np.linalg.norm(self.coeffs))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything a run needs except eps and the random stream."""

    basis: GalerkinBasis
    spec: CoefficientSpec
    noise: NoiseModel
    T: float
    dt: float
    u0: np.ndarray
    v0: np.ndarray
    forcing: ForcingProfile
    snapshot_stride: int = 1

    def __post_init__(self):
        n = self.basis.n_modes
        for name in ('u0', 'v0'):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if self.forcing.coeffs.shape != (n,):
            raise ValueError(f"forcing has {self.forcing.coeffs.size} coefficients, expected {n}")
        if self.noise.n_modes != n:
            raise ValueError(f"noise has {self.noise.n_modes} modes, expected {n}")
        if not (self.T > 0 and self.dt > 0):
            raise ValueError(f"T and dt must be positive, got T={self.T}, dt={self.dt}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.snapshot_stride < 1:
            raise ValueError(f"snapshot_stride must be at least 1, got {self.snapshot_stride}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def with_dt(self, dt: float) -> "Problem":
        return Problem(self.basis, self.spec, self.noise, self.T, dt, self.u0, self.v0,
                       self.forcing, self.snapshot_stride)

    def with_spec(self, spec: CoefficientSpec) -> "Problem":
        return Problem(self.basis, spec, self.noise, self.T, self.dt, self.u0, self.v0,
                       self.forcing, self.snapshot_stride)

    def with_noise(self, noise: NoiseModel) -> "Problem":
        return Problem(self.basis, self.spec, noise, self.T, self.dt, self.u0, self.v0,
                       self.forcing, self.snapshot_stride)


@dataclass
class CoupledState:
    a: np.ndarray
    fast: FastState
    t: float = 0.0


@dataclass
class Trajectory:
    """Sampled slow coefficients and per-step diagnostics; index 0 is t = 0."""

    times: np.ndarray
    coeffs: np.ndarray
    norm_h: np.ndarray
    norm_v: np.ndarray
    friction_energy: np.ndarray
    fast_norm: Optional[np.ndarray] = None
    snapshot_steps: Optional[np.ndarray] = None
    fast_snapshots: Optional[np.ndarray] = None
    eps: Optional[float] = None
    label: str = "coupled"

    @property
    def n_steps(self) -> int:
        return int(self.times.size - 1)

    @property
    def final(self) -> np.ndarray:
        return self.coeffs[-1]

    @property
    def has_snapshots(self) -> bool:
        return self.fast_snapshots is not None and self.fast_snapshots.shape[0] > 0


@dataclass
class _Recorder:
    """Accumulates per-step samples and turns them into a Trajectory."""

    basis: GalerkinBasis
    snapshot_stride: int
    keep_fast: bool
    times: List[float] = field(default_factory=list)
    coeffs: List[np.ndarray] = field(default_factory=list)
    norm_h: List[float] = field(default_factory=list)
    norm_v: List[float] = field(default_factory=list)
    friction: List[float] = field(default_factory=list)
    fast_norm: List[float] = field(default_factory=list)
    snap_steps: List[int] = field(default_factory=list)
    snaps: List[np.ndarray] = field(default_factory=list)

    def record(self, step: int, t: float, a: np.ndarray, A: np.ndarray, fast_b: Optional[np.ndarray] = None):
        energy = float(a @ A @ a)
        values = (h_norm(a), v_norm(self.basis, a), energy)
        if not all(np.isfinite(values)) or not np.all(np.isfinite(a)):
            raise SimulationError("non-finite slow state", step=step)
        self.times.append(t)
        self.coeffs.append(np.array(a))
        self.norm_h.append(values[0])
        self.norm_v.append(values[1])
        self.friction.append(energy)
        if fast_b is not None:
            if not np.all(np.isfinite(fast_b)):
                raise SimulationError("non-finite fast state", step=step)
            self.fast_norm.append(float(np.linalg.norm(fast_b)))
            if self.keep_fast and step % self.snapshot_stride == 0:
                self.snap_steps.append(step)
                self.snaps.append(np.array(fast_b))

    def build(self, eps: Optional[float], label: str) -> Trajectory:
        has_fast = len(self.fast_norm) > 0
        return Trajectory(
            times=np.array(self.times),
            coeffs=np.array(self.coeffs),
            norm_h=np.array(self.norm_h),
            norm_v=np.array(self.norm_v),
            friction_energy=np.array(self.friction),
            fast_norm=np.array(self.fast_norm) if has_fast else None,
            snapshot_steps=np.array(self.snap_steps, dtype=int) if self.keep_fast else None,
            fast_snapshots=(
                np.array(self.snaps).reshape(-1, self.basis.n_modes) if self.keep_fast else None
            ),
            eps=eps,
            label=label,
        )


def assemble_friction_matrix(basis: GalerkinBasis, spec: CoefficientSpec, eps: float, fast_grid_values,
                             cell_values: Optional[np.ndarray] = None) -> np.ndarray:
    """A_ij = int_D alpha(x/eps, v(x)) e_i . e_j dx by grid quadrature (symmetric, PSD)."""
    alpha = alpha_eps_on_grid(spec, basis, eps, fast_grid_values, cell_values=cell_values)
    return weighted_mass_matrix(basis, alpha)


def system_matrix(A: np.ndarray, dt: float, basis: GalerkinBasis) -> np.ndarray:
    return np.eye(basis.n_modes) + dt * (np.diag(basis.stiffness_diag) + A)


def slow_step(a, A, f_coeffs, dt: float, basis: GalerkinBasis) -> np.ndarray:
    """Solve (I + dt (Lambda + A)) a' = a + dt f by Cholesky."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    matrix = system_matrix(np.asarray(A, dtype=float), dt, basis)
    rhs = np.asarray(a, dtype=float) + dt * np.asarray(f_coeffs, dtype=float)
    try:
        factor = cho_factor(matrix, lower=True, check_finite=True)
        a_next = cho_solve(factor, rhs)
    except (LinAlgError, ValueError) as e:
        with np.errstate(all='ignore'):
            cond = float(np.linalg.cond(matrix)) if np.all(np.isfinite(matrix)) else float('inf')
        raise SolverError(f"implicit slow step failed: {e}", cond) from e
    return a_next


def simulate_coupled(problem: Problem, eps: float, rng: Optional[np.random.Generator] = None,
                     normals: Optional[np.ndarray] = None, keep_fast: bool = True) -> Trajectory:
    """
    Run the eps-system over [0, T].

    Args:
        problem: built problem
        eps: scale separation
        rng: stream for the fast noise (one standard normal per mode per step)
        normals: optional explicit (n_steps, n_modes) standard normals replacing rng
        keep_fast: keep fast coefficient snapshots every snapshot_stride steps

    Returns:
        Trajectory with the fast norm recorded at every step
    """
    basis, spec, noise, dt = problem.basis, problem.spec, problem.noise, problem.dt
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if (rng is None) == (normals is None):
        raise ValueError("Provide exactly one of rng or normals")
    if normals is not None and normals.shape != (problem.n_steps, basis.n_modes):
        raise ValueError(f"normals have shape {normals.shape}, expected {(problem.n_steps, basis.n_modes)}")
    cell_values = oscillating_cell_values(spec, basis, eps)

    state = CoupledState(a=problem.u0.copy(), fast=FastState.from_coefficients(basis, problem.v0))
    recorder = _Recorder(basis, problem.snapshot_stride, keep_fast)

    def friction(fast: FastState, step: int) -> np.ndarray:
        try:
            return assemble_friction_matrix(basis, spec, eps, fast.grid_cache, cell_values=cell_values)
        except FloatingPointError as e:
            raise SimulationError(str(e), step=step) from e

    recorder.record(0, 0.0, state.a, friction(state.fast, 0), state.fast.b)

    with np.errstate(over='raise', invalid='raise'):
        for n in range(1, problem.n_steps + 1):
            t_left = (n - 1) * dt
            try:
                if normals is None:
                    fast = ou_exact_step(state.fast, state.a, dt, eps, noise, rng)
                else:
                    b = ou_transition(state.fast.b, state.a, dt, eps, noise.q, normals[n - 1])
                    fast = FastState(basis=basis, b=b, t=state.fast.t + dt)
                A = friction(fast, n)
                a = slow_step(state.a, A, problem.forcing.at(t_left), dt, basis)
            except FloatingPointError as e:
                if isinstance(e, SimulationError):
                    raise
                raise SimulationError(f"overflow in step: {e}", step=n) from e
            state = CoupledState(a=a, fast=fast, t=n * dt)
            recorder.record(n, state.t, state.a, A, fast.b)

    return recorder.build(eps, "coupled")


def aggregate_normals(fine: np.ndarray, factor: int, dt_fine: float, eps: float) -> np.ndarray:
    """
    Coarse-step standard normals consistent with `factor` consecutive fine steps
    of the exact OU transition (same Brownian path, u frozen).
    """
    if factor == 1:
        return fine
    n_fine, n_modes = fine.shape
    if n_fine % factor:
        raise ValueError(f"{n_fine} fine steps do not split into blocks of {factor}")
    d = np.exp(-dt_fine / eps)
    weights = d ** np.arange(factor - 1, -1, -1)
    scale = np.sqrt(-np.expm1(-2.0 * dt_fine / eps) / -np.expm1(-2.0 * factor * dt_fine / eps))
    blocks = fine.reshape(n_fine // factor, factor, n_modes)
    return scale * np.einsum('i,bim->bm', weights, blocks)


@dataclass
class SplittingLadder:
    dts: List[float]
    endpoint_differences: List[float]
    orders: List[float]


def splitting_ladder(problem: Problem, eps: float, rng: np.random.Generator, levels: int = 4) -> SplittingLadder:
    """
    Endpoint slow states over a dt-halving ladder driven by one fine noise path;
    orders are log2 ratios of successive endpoint differences.
    """
    if levels < 3:
        raise ValueError(f"levels must be at least 3, got {levels}")
    fine_factor = 2 ** (levels - 1)
    fine = problem.with_dt(problem.dt / fine_factor)
    fine_normals = rng.standard_normal((fine.n_steps, problem.basis.n_modes))

    dts, endpoints = [], []
    for level in range(levels):
        factor = 2 ** (levels - 1 - level)
        sub = problem.with_dt(problem.dt / 2 ** level)
        normals = aggregate_normals(fine_normals, factor, fine.dt, eps)
        traj = simulate_coupled(sub, eps, normals=normals, keep_fast=False)
        dts.append(sub.dt)
        endpoints.append(traj.final)

    diffs = [float(np.linalg.norm(endpoints[i] - endpoints[i + 1])) for i in range(levels - 1)]
    orders = [
        float(np.log2(diffs[i] / diffs[i + 1])) if diffs[i + 1] > 0 else float('inf')
        for i in range(len(diffs) - 1)
    ]
    return SplittingLadder(dts=dts, endpoint_differences=diffs, orders=orders)


def v_integral(trajectory: Trajectory) -> float:
    """Right-endpoint sum dt ||a_n||_V^2 over steps 1..N."""
    dt = np.diff(trajectory.times)
    return float(np.sum(dt * trajectory.norm_v[1:] ** 2))


def h2_integral(trajectory: Trajectory, basis: GalerkinBasis) -> float:
    """
    Right-endpoint sum dt ||Lambda a_n||^2, the discrete L2(0,T;H^2) seminorm.

    The modes are Laplacian eigenfunctions, so ||Laplace u||_H = ||Lambda a||.
    """
    dt = np.diff(trajectory.times)
    lap = trajectory.coeffs[1:] * basis.stiffness_diag
    return float(np.sum(dt * np.sum(lap * lap, axis=1)))


@dataclass
class EnergyReport:
    """Recorded norms against the discrete energy bounds of the implicit scheme."""

    sup_h: float
    h_bound: float
    v_integral: float
    v_integral_bound: float
    sup_v: float
    v_bound: float
    h_monotone: bool
    h2_integral: float = 0.0
    h2_integral_bound: float = float('inf')
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def energy_diagnostics(trajectory: Trajectory, problem: Problem, rtol: float = 1e-12) -> EnergyReport:
    """
    Check the trajectory against bounds derived from the implicit step:

        ||a_n||^2 <= (1 - dt)^{-n} (||a_0||^2 + sum_m dt ||f_m||^2)
        sum_n dt ||a_n||_V^2 <= ||a_0||^2 / 2 + sqrt(T) ||f||_{L2(L2)} H
        ||a_n||_V^2 <= ||a_0||_V^2 + 1/2 sum_m dt (||f_m|| + alpha_max H)^2
        sum_n dt ||Lambda a_n||^2 <= ||a_0||_V^2 + sum_m dt (||f_m|| + alpha_max H)^2

    where H is the sup of the first bound. The last line is the H^2 estimate,
    from testing the step with Lambda a_{n+1} and ||A|| <= alpha_max. With
    f = 0 the H norm must also be non-increasing step by step.
    """
    dt = problem.dt
    if not dt < 1.0:
        raise ValueError(f"energy bounds need dt < 1, got {dt}")
    n_steps = trajectory.n_steps
    f_norms = np.array([problem.forcing.norm_at(m * dt) for m in range(n_steps)])
    a0 = trajectory.coeffs[0]

    growth = (1.0 - dt) ** (-np.arange(n_steps + 1))
    load = np.concatenate([[0.0], np.cumsum(dt * f_norms ** 2)])
    h_bounds = np.sqrt(growth * (float(a0 @ a0) + load))
    h_bound = float(np.max(h_bounds))
    sup_h = float(np.max(trajectory.norm_h))

    v_int = v_integral(trajectory)
    f_l2 = float(np.sqrt(np.sum(dt * f_norms ** 2)))
    v_integral_bound = 0.5 * float(a0 @ a0) + np.sqrt(problem.T) * f_l2 * h_bound

    sup_v = float(np.max(trajectory.norm_v))
    load_v = float(np.sum(dt * (f_norms + problem.spec.alpha_max * h_bound) ** 2))
    v_bound = float(np.sqrt(v_norm(problem.basis, a0) ** 2 + 0.5 * load_v))
    h2_int = h2_integral(trajectory, problem.basis)
    h2_bound = v_norm(problem.basis, a0) ** 2 + load_v

    steps = np.diff(trajectory.norm_h)
    h_monotone = bool(np.all(steps <= rtol * trajectory.norm_h[:-1]))

    violations = []
    if np.any(trajectory.norm_h > h_bounds * (1 + rtol)):
        violations.append(f"sup ||u||_H = {sup_h:.6g} exceeds the Gronwall bound {h_bound:.6g}")
    if v_int > v_integral_bound * (1 + rtol):
        violations.append(f"int ||u||_V^2 = {v_int:.6g} exceeds {v_integral_bound:.6g}")
    if sup_v > v_bound * (1 + rtol):
        violations.append(f"sup ||u||_V = {sup_v:.6g} exceeds {v_bound:.6g}")
    if h2_int > h2_bound * (1 + rtol):
        violations.append(f"int ||Laplace u||^2 = {h2_int:.6g} exceeds {h2_bound:.6g}")
    if problem.forcing.is_zero and not h_monotone:
        violations.append("||u||_H increased during an unforced step")

    return EnergyReport(
        sup_h=sup_h,
        h_bound=h_bound,
        v_integral=v_int,
        v_integral_bound=float(v_integral_bound),
        sup_v=sup_v,
        v_bound=v_bound,
        h_monotone=h_monotone,
        h2_integral=h2_int,
        h2_integral_bound=float(h2_bound),
        violations=violations,
    )
