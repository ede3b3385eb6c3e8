"""
Invariant suites with fixed seeds.

Each suite returns a SuiteResult of CheckResult rows with the measured value
and its threshold, so callers (CLI, API) get a machine-readable verdict.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from src.galerkin.basis import (
    BasisKind,
    analytic_divergence,
    build_basis,
    check_orthonormality,
    evaluate_on_grid,
    project,
    spectral_divergence,
    unit_vector,
)
from src.galerkin.coefficient import (
    CellFunction,
    CellTerm,
    CoefficientSpec,
    FastResponse,
    cell_average,
)
from src.harness.config import ExperimentConfig, build_problem, phi_coefficients
from src.harness.ensemble import CheckResult
from src.solver.averaging import (
    alpha_bar,
    alpha_bar_monte_carlo,
    gauss_hermite_expectation,
    picard_uniqueness_check,
    resolvent_psi,
    solve_averaged,
)
from src.solver.slowsolver import ForcingProfile, Problem, energy_diagnostics, simulate_coupled
from src.stochastic.fastproc import (
    NoiseModel,
    contraction_check,
    moment_bound_check,
    stationary_variance_check,
)
from src.stochastic.streams import spawn_rng
from src.utils.io import format_float

VALIDATION_SEED = 20240601
N_SE = 3.0


@dataclass
class SuiteResult:
    name: str
    checks: List[CheckResult] = field(default_factory=list)
    runtime_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            'suite': self.name,
            'passed': self.passed,
            'runtime_seconds': self.runtime_seconds,
            'checks': [c.to_dict() for c in self.checks],
        }


def desk_spec(y_dim: int = 1, v_dim: int = 1) -> CoefficientSpec:
    """alpha = 1 + 0.5 sin^2(2 pi y_1) tanh^2(v_1)."""
    k = (1,) if y_dim == 1 else (1, 0)
    return CoefficientSpec(
        alpha0=1.0,
        terms=(CellTerm(g=CellFunction(type='sin_squared', wave_vector=k, amplitude=0.5),
                        h=FastResponse(type='tanh_squared')),),
        y_dim=y_dim,
        v_dim=v_dim,
    )


def zero_mean_spec() -> CoefficientSpec:
    return CoefficientSpec(
        alpha0=1.0,
        terms=(
            CellTerm(g=CellFunction(type='sin_product', wave_vector=(1, 1), amplitude=0.5),
                     h=FastResponse(type='rational')),
            CellTerm(g=CellFunction(type='cos', wave_vector=(2, 1), amplitude=0.25),
                     h=FastResponse(type='tanh_squared')),
        ),
        y_dim=2,
        v_dim=1,
    )


def _normal_moment(k: int) -> float:
    """E[Z^k] for Z ~ N(0, 1): (k - 1)!! for even k, 0 for odd k."""
    if k % 2:
        return 0.0
    return float(np.prod(np.arange(k - 1, 0, -2))) if k else 1.0


def _check(name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    return CheckResult(name=name, passed=bool(value < threshold), value=float(value),
                       threshold=float(threshold), detail=detail)


# ========== SUITES ==========

def suite_basis() -> List[CheckResult]:
    checks = []
    for kind, n, m in ((BasisKind.SCALAR_SINE_1D, 16, 512),
                       (BasisKind.SCALAR_SINE_2D, 4, 16),
                       (BasisKind.DIVFREE_FOURIER_2D, 2, 32)):
        basis = build_basis(kind, n, m)
        mass_dev, stiff_dev = check_orthonormality(basis)
        checks.append(_check(f"{kind.value}_orthonormal", mass_dev, 1e-12))
        checks.append(_check(f"{kind.value}_stiffness_diagonal", stiff_dev, 1e-12))

    divfree = build_basis(BasisKind.DIVFREE_FOURIER_2D, 2, 32)
    worst_fft = max(
        float(np.max(np.abs(spectral_divergence(divfree, divfree.eval_table[k]))))
        / np.sqrt(divfree.stiffness_diag[k])
        for k in range(divfree.n_modes)
    )
    worst_exact = max(
        float(np.max(np.abs(analytic_divergence(divfree, unit_vector(divfree, k)))))
        for k in range(divfree.n_modes)
    )
    checks.append(_check("divfree_spectral_divergence", worst_fft, 1e-12))
    checks.append(_check("divfree_analytic_divergence", worst_exact, 1e-12))

    sine = build_basis(BasisKind.SCALAR_SINE_2D, 4, 16)
    boundary = sine.boundary_mask()
    worst_edge = float(np.max(np.abs(sine.eval_table[:, boundary, 0])))
    checks.append(_check("sine_dirichlet_boundary", worst_edge, 1e-12))

    line = build_basis(BasisKind.SCALAR_SINE_1D, 16, 512)
    x = line.points[:, 0]
    k = line.mode_indices[:, 0].astype(float)
    exact = 4.0 * np.sqrt(2.0) * (1.0 - (-1.0) ** k) / (k * np.pi) ** 3
    checks.append(_check("project_parabola", float(np.max(np.abs(project(line, x * (1 - x)) - exact))), 1e-10))

    rng = spawn_rng(VALIDATION_SEED, 0, "validate_basis")
    c = rng.standard_normal(line.n_modes)
    checks.append(_check("project_evaluate_roundtrip",
                         float(np.max(np.abs(project(line, evaluate_on_grid(line, c)) - c))), 1e-12))
    return checks


def suite_quadrature() -> List[CheckResult]:
    checks = []
    n_nodes = 5
    worst = 0.0
    for k in range(2 * n_nodes):
        exact = _normal_moment(k)
        got = gauss_hermite_expectation(lambda z, k=k: z[:, 0] ** k, 0.0, 1.0, n_nodes)
        worst = max(worst, abs(got - exact) / max(1.0, exact))
    checks.append(_check("gauss_hermite_degree_exactness", worst, 1e-12, detail=f"degrees 0..{2 * n_nodes - 1}"))

    mean, var = 0.7, 0.3
    second = gauss_hermite_expectation(lambda z: z[:, 0] ** 2, mean, var, 2)
    checks.append(_check("gauss_hermite_second_moment", abs(second - (mean ** 2 + var)), 1e-12))

    mean2 = np.array([0.2, -0.4])
    cov2 = np.array([[0.5, 0.1], [0.1, 0.3]])
    cross = gauss_hermite_expectation(lambda z: z[:, 0] * z[:, 1], mean2, cov2, 3)
    checks.append(_check("gauss_hermite_2d_cross_moment", abs(cross - (mean2[0] * mean2[1] + cov2[0, 1])), 1e-12))

    spec = zero_mean_spec()
    v = np.linspace(-3.0, 3.0, 25)
    checks.append(_check("cell_average_zero_mean", float(np.max(np.abs(cell_average(spec, v) - spec.alpha0))), 1e-14))

    desk = desk_spec()
    got = float(cell_average(desk, 1.0))
    checks.append(_check("cell_average_sin_squared", abs(got - (1.0 + 0.25 * np.tanh(1.0) ** 2)), 1e-14))
    return checks


def suite_ou() -> List[CheckResult]:
    checks = []
    basis = build_basis(BasisKind.SCALAR_SINE_1D, 8, 16)
    noise = NoiseModel.from_decay(basis, 0.5, 3.0)

    eta1 = np.full(basis.n_modes, 100.0)
    eta2 = -eta1
    xi = np.linspace(1.0, 0.0, basis.n_modes)
    dev = contraction_check(basis, noise, eta1, eta2, xi, T=0.5, eps=0.1, dt=0.01,
                            rng=spawn_rng(VALIDATION_SEED, 0, "validate_contraction"))
    checks.append(_check("contraction_identity", dev, 1e-12))

    report = stationary_variance_check(basis, noise, T=200.0, burn_in=20.0,
                                       rng=spawn_rng(VALIDATION_SEED, 0, "validate_stationary"),
                                       eps=1.0, dt=0.05, batch_length=5.0, point=(0.3,))
    checks.append(CheckResult("stationary_variance", report.passed(N_SE), float(np.max(report.z_scores)),
                              N_SE, detail=f"{report.n_batches} batches; value is the largest z-score"))

    moments = moment_bound_check(basis, noise, eta=np.full(basis.n_modes, 0.5), xi=xi, T=3.0,
                                 n_paths=1000, rng=spawn_rng(VALIDATION_SEED, 0, "validate_moment"), dt=0.05)
    checks.append(CheckResult("moment_bound", moments.passed(N_SE), moments.margin,
                              -N_SE * moments.standard_error, detail=f"worst at t={moments.worst_time:.3g}"))
    return checks


def _energy_problem(spec: CoefficientSpec) -> Problem:
    basis = build_basis(BasisKind.SCALAR_SINE_1D, 8, 256)
    u0 = np.zeros(basis.n_modes)
    u0[0], u0[2] = 1.0, 0.3
    return Problem(basis=basis, spec=spec, noise=NoiseModel.from_decay(basis, 0.5, 3.0), T=0.1, dt=1e-3,
                   u0=u0, v0=np.zeros(basis.n_modes), forcing=ForcingProfile.zero(basis))


def suite_energy() -> List[CheckResult]:
    checks = []
    problem = _energy_problem(desk_spec())
    h2_ratios = []
    for i, eps in enumerate((0.2, 0.1, 0.05)):
        traj = simulate_coupled(problem, eps, spawn_rng(VALIDATION_SEED, i, "validate_energy"), keep_fast=False)
        report = energy_diagnostics(traj, problem)
        growth = float(np.max(np.diff(traj.norm_h)))
        checks.append(CheckResult(f"coupled_energy_eps_{eps:g}", report.passed and report.h_monotone, growth, 0.0,
                                  detail="; ".join(report.violations)))
        h2_ratios.append(report.h2_integral / report.h2_integral_bound)
    checks.append(_check("coupled_h2_integral_bound", max(h2_ratios), 1.0,
                         detail=", ".join(f"{r:.4g}" for r in h2_ratios)))
    averaged = solve_averaged(problem)
    report = energy_diagnostics(averaged, problem)
    checks.append(CheckResult("averaged_energy", report.passed and report.h_monotone,
                              float(np.max(np.diff(averaged.norm_h))), 0.0, detail="; ".join(report.violations)))
    return checks


def suite_averaging() -> List[CheckResult]:
    checks = []
    basis = build_basis(BasisKind.SCALAR_SINE_1D, 4, 64)
    spec = desk_spec()
    noise = NoiseModel.from_decay(basis, 0.5, 3.0)
    xi = np.array([0.8, 0.0, 0.2, 0.0])

    values = alpha_bar(spec, basis, noise, xi)
    idx = np.array([8, 21, 32, 45])
    mc_mean, mc_se = alpha_bar_monte_carlo(spec, basis, noise, xi, n_samples=20000,
                                           rng=spawn_rng(VALIDATION_SEED, 0, "validate_averaging"),
                                           point_indices=idx)
    z = np.abs(values[idx] - mc_mean) / mc_se
    checks.append(CheckResult("alpha_bar_vs_function_space_mc", bool(np.all(z <= N_SE)), float(np.max(z)), N_SE))

    doubled = alpha_bar(spec, basis, noise, xi, n_nodes=40)
    checks.append(_check("gauss_hermite_node_doubling", float(np.max(np.abs(doubled - values) / values)), 1e-8))

    inside = bool(np.all((values >= spec.alpha_min) & (values <= spec.alpha_max)))
    checks.append(CheckResult("alpha_bar_within_bounds", inside, float(np.min(values)), spec.alpha_min))

    const = CoefficientSpec.constant(2.0)
    zero_mean = CoefficientSpec(
        alpha0=1.0,
        terms=(CellTerm(g=CellFunction(type='sin', wave_vector=(1,), amplitude=0.5),
                        h=FastResponse(type='rational')),),
    )
    checks.append(_check("alpha_bar_constant", float(np.max(np.abs(alpha_bar(const, basis, noise, xi) - 2.0))), 1e-14))
    checks.append(_check("alpha_bar_zero_mean_cell",
                         float(np.max(np.abs(alpha_bar(zero_mean, basis, noise, xi) - 1.0))), 1e-13))

    problem = _energy_problem(spec)
    gap = picard_uniqueness_check(problem, n_steps=20)
    checks.append(_check("picard_uniqueness", gap, 1e-9))
    return checks


def suite_psi() -> List[CheckResult]:
    checks = []
    basis = build_basis(BasisKind.SCALAR_SINE_1D, 4, 128)
    noise = NoiseModel.from_decay(basis, 0.5, 3.0)
    spec = desk_spec()
    eps = 0.1
    eta = np.zeros(basis.n_modes)
    xi = unit_vector(basis, 0)
    phi = unit_vector(basis, 0)

    const = resolvent_psi(CoefficientSpec.constant(1.0), basis, noise, eta, xi, phi, eps)
    checks.append(CheckResult("psi_constant_is_zero", const == 0.0, abs(const), 0.0))

    t40 = resolvent_psi(spec, basis, noise, eta, xi, phi, eps, t_max=40.0)
    t60 = resolvent_psi(spec, basis, noise, eta, xi, phi, eps, t_max=60.0)
    checks.append(_check("psi_tail_truncation", abs(t60 - t40), 1e-10))

    ladder = [abs(resolvent_psi(spec, basis, noise, eta, xi, phi, eps, decay_rate=c)) for c in (1.0, 0.1, 0.01)]
    ratio = max(ladder) / min(ladder) if min(ladder) > 0 else float('inf')
    checks.append(_check("psi_bounded_in_decay_rate", ratio, 5.0, detail=", ".join(f"{v:.4g}" for v in ladder)))

    lin = resolvent_psi(spec, basis, noise, eta, xi, 3.0 * phi, eps)
    base = resolvent_psi(spec, basis, noise, eta, xi, phi, eps)
    checks.append(_check("psi_linear_in_phi", abs(lin - 3.0 * base) / max(abs(base), 1e-300), 1e-12))
    return checks


SUITES: Dict[str, Callable[[], List[CheckResult]]] = {
    'basis': suite_basis,
    'quadrature': suite_quadrature,
    'ou': suite_ou,
    'energy': suite_energy,
    'averaging': suite_averaging,
    'psi': suite_psi,
}


def validate(suite_name: str) -> SuiteResult:
    """Run one named invariant suite."""
    if suite_name not in SUITES:
        raise ValueError(f"Unknown suite {suite_name!r}. Choose one of {sorted(SUITES)}")
    start = time.time()
    checks = SUITES[suite_name]()
    return SuiteResult(name=suite_name, checks=checks, runtime_seconds=time.time() - start)


PSI_DECAY_RATES = (1.0, 0.1, 0.01)


def psi_ladder(config: ExperimentConfig, eps: float, decay_rates=PSI_DECAY_RATES, bound_factor: float = 5.0) -> dict:
    """
    Resolvent corrector for a configured problem at several decay rates,
    with eta = v0, xi = u0 and phi the configured diagnostic mode.
    """
    problem = build_problem(config)
    phi = phi_coefficients(config, problem.basis)
    args = (problem.spec, problem.basis, problem.noise, problem.v0, problem.u0, phi, eps)
    ladder = {format_float(c): resolvent_psi(*args, decay_rate=c) for c in decay_rates}
    magnitudes = [abs(v) for v in ladder.values()]
    ratio = max(magnitudes) / min(magnitudes) if min(magnitudes) > 0 else None
    return {
        "epsilon": eps,
        "psi_sqrt_eps": resolvent_psi(*args),
        "ladder": ladder,
        "max_min_ratio": ratio,
        "bounded": ratio is None or ratio < bound_factor,
    }
