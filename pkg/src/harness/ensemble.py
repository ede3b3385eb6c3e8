"""
Path ensembles and the eps-sweep.

Each path draws its fast noise from spawn_rng(base_seed, path) so results do
not depend on the worker count. Aggregation sorts by path index before any
statistic is taken.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src.galerkin.basis import unit_vector
from src.harness.config import ExperimentConfig, build_problem, config_hash, phi_coefficients
from src.harness.diagnostics import l2v_error, s1_diagnostic, s2_diagnostic, s3_diagnostic
from src.solver.averaging import solve_averaged
from src.solver.slowsolver import Problem, Trajectory, h2_integral, simulate_coupled, v_integral
from src.stochastic.streams import FAST_NOISE, spawn_rng
from src.utils.errors import SimulationError
from src.utils.logs import log_message


@dataclass
class PathResult:
    path: int
    error: float
    s1: Optional[float]
    s2: Optional[float]
    sup_fast_energy: float
    sup_v: float
    v_integral: float = 0.0
    h2_integral: float = 0.0


@dataclass
class CheckResult:
    """One recorded acceptance assertion; failures never raise."""

    name: str
    passed: bool
    value: float
    threshold: Optional[float] = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'passed': self.passed,
            'value': self.value,
            'threshold': self.threshold,
            'detail': self.detail,
        }


@dataclass
class EpsilonSummary:
    epsilon: float
    n_paths: int
    median: float
    mean: float
    q25: float
    q75: float
    prob_exceed: float
    s1_median_abs: Optional[float]
    s2_median_abs: Optional[float]
    s3: Optional[float]
    fast_energy_median: float
    sup_v_median: float
    v_integral_median: float = 0.0
    h2_integral_median: float = 0.0


@dataclass
class SweepReport:
    config_hash: str
    base_seed: int
    delta: float
    summaries: List[EpsilonSummary]
    paths: Dict[float, List[PathResult]]
    checks: List[CheckResult] = field(default_factory=list)
    runtime_seconds: float = 0.0

    @property
    def epsilons(self) -> List[float]:
        return [s.epsilon for s in self.summaries]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _run_path(task) -> PathResult:
    """Worker entry point; must stay module-level for process pools."""
    problem, eps, base_seed, path, u_bar, phi, with_diagnostics, gh_nodes = task
    rng = spawn_rng(base_seed, path, FAST_NOISE)
    try:
        traj = simulate_coupled(problem, eps, rng, keep_fast=with_diagnostics)
    except SimulationError as e:
        raise e.with_path(path) from e

    s1 = s2 = None
    if with_diagnostics:
        s1 = s1_diagnostic(traj, problem.spec, problem.basis, problem.noise, eps, phi, n_nodes=gh_nodes)
        s2 = s2_diagnostic(traj, u_bar, problem.spec, problem.basis, problem.noise, eps, phi, n_nodes=gh_nodes)
    return PathResult(
        path=path,
        error=l2v_error(traj, u_bar, problem.basis),
        s1=s1,
        s2=s2,
        sup_fast_energy=float(np.max(traj.fast_norm ** 2)),
        sup_v=float(np.max(traj.norm_v)),
        v_integral=v_integral(traj),
        h2_integral=h2_integral(traj, problem.basis),
    )


def run_ensemble(problem: Problem, eps: float, n_paths: int, base_seed: int, u_bar: Trajectory,
                 workers: int = 1, phi_coeffs=None, with_diagnostics: bool = True,
                 gh_nodes: int = 20) -> List[PathResult]:
    """
    Simulate n_paths independent eps-paths and measure each against ubar.

    Returns:
        PathResult list ordered by path index
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be positive, got {n_paths}")
    if u_bar.times.size != problem.n_steps + 1:
        raise ValueError("ubar must be computed on the same time grid as the problem")
    phi = unit_vector(problem.basis, 0) if phi_coeffs is None else np.asarray(phi_coeffs, dtype=float)
    tasks = [(problem, eps, base_seed, i, u_bar, phi, with_diagnostics, gh_nodes) for i in range(n_paths)]

    if workers <= 1:
        results = [_run_path(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_run_path, tasks))
    return sorted(results, key=lambda r: r.path)


def _median_abs(values: List[Optional[float]]) -> Optional[float]:
    vals = [abs(v) for v in values if v is not None]
    return float(np.median(vals)) if vals else None


def summarize(eps: float, results: List[PathResult], delta: float, s3: Optional[float]) -> EpsilonSummary:
    ordered = sorted(results, key=lambda r: r.path)
    errors = np.array([r.error for r in ordered])
    if not np.all(np.isfinite(errors)) or np.any(errors < 0):
        raise SimulationError(f"non-finite error sample at eps={eps}")
    return EpsilonSummary(
        epsilon=eps,
        n_paths=len(ordered),
        median=float(np.median(errors)),
        mean=float(np.mean(errors)),
        q25=float(np.quantile(errors, 0.25)),
        q75=float(np.quantile(errors, 0.75)),
        prob_exceed=float(np.mean(errors > delta)),
        s1_median_abs=_median_abs([r.s1 for r in ordered]),
        s2_median_abs=_median_abs([r.s2 for r in ordered]),
        s3=s3,
        fast_energy_median=float(np.median([r.sup_fast_energy for r in ordered])),
        sup_v_median=float(np.median([r.sup_v for r in ordered])),
        v_integral_median=float(np.median([r.v_integral for r in ordered])),
        h2_integral_median=float(np.median([r.h2_integral for r in ordered])),
    )


def _strictly_decreasing(values: List[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _relative_variation(values: List[float]) -> float:
    top = max(values)
    return (top - min(values)) / top if top > 0 else 0.0


def ladder_checks(summaries: List[EpsilonSummary], v_tolerance: float = 0.2,
                  s3_fraction: float = 0.1) -> List[CheckResult]:
    """Acceptance assertions along the eps ladder; empty for a single eps."""
    if len(summaries) < 2:
        return []
    medians = [s.median for s in summaries]
    probs = [s.prob_exceed for s in summaries]
    checks = [
        CheckResult('median_error_decreasing', _strictly_decreasing(medians), medians[-1], medians[0],
                    detail=", ".join(f"{m:.4g}" for m in medians)),
        CheckResult('prob_exceed_decreasing',
                    all(b <= a for a, b in zip(probs, probs[1:])) and (probs[-1] < probs[0] or probs[-1] == 0.0),
                    probs[-1], probs[0], detail=", ".join(f"{p:.4g}" for p in probs)),
        CheckResult('prob_exceed_reaches_zero', probs[-1] == 0.0, probs[-1], 0.0),
    ]
    s1 = [s.s1_median_abs for s in summaries]
    if all(v is not None for v in s1):
        checks.append(CheckResult('s1_decreasing', _strictly_decreasing(s1), s1[-1], s1[0],
                                  detail=", ".join(f"{v:.4g}" for v in s1)))
    s3 = [abs(s.s3) for s in summaries if s.s3 is not None]
    if len(s3) == len(summaries):
        checks.append(CheckResult('s3_decreasing', _strictly_decreasing(s3), s3[-1], s3[0],
                                  detail=", ".join(f"{v:.4g}" for v in s3)))
        ratio = s3[-1] / s3[0] if s3[0] > 0 else 0.0
        checks.append(CheckResult('s3_below_fraction', ratio < s3_fraction, ratio, s3_fraction))
    # sup_t ||u||_V equals ||u0||_V under unforced decay; compare time integrals
    for name, values in (('v_integral_uniform_in_eps', [s.v_integral_median for s in summaries]),
                         ('h2_integral_uniform_in_eps', [s.h2_integral_median for s in summaries])):
        variation = _relative_variation(values)
        checks.append(CheckResult(name, variation < v_tolerance, variation, v_tolerance,
                                  detail=", ".join(f"{v:.6g}" for v in values)))
    return checks


def convergence_sweep(config: ExperimentConfig, workers: Optional[int] = None,
                      with_diagnostics: bool = True) -> SweepReport:
    """
    Run the eps ladder of `config`: one averaged solve, then an ensemble per eps.

    Failed acceptance assertions are recorded in the report, never raised.
    """
    start = time.time()
    workers = config.sweep.workers if workers is None else workers
    problem = build_problem(config)
    phi = phi_coefficients(config, problem.basis)
    gh_nodes = config.sweep.gh_nodes

    log_message(f"🔍 Solving the averaged equation ({problem.n_steps} steps)...")
    u_bar = solve_averaged(problem, n_nodes=gh_nodes)

    paths: Dict[float, List[PathResult]] = {}
    s3_values: Dict[float, Optional[float]] = {}
    for eps in config.sweep.epsilons:
        log_message(f"\n📦 eps = {eps:g}: {config.sweep.n_paths} paths on {workers} worker(s)")
        paths[eps] = run_ensemble(problem, eps, config.sweep.n_paths, config.sweep.base_seed, u_bar,
                                  workers=workers, phi_coeffs=phi, with_diagnostics=with_diagnostics,
                                  gh_nodes=gh_nodes)
        s3_values[eps] = (
            s3_diagnostic(u_bar, problem.spec, problem.basis, problem.noise, eps, phi, n_nodes=gh_nodes)
            if with_diagnostics else None
        )
        log_message(f"  ✓ median error {np.median([r.error for r in paths[eps]]):.6g}")

    first = config.sweep.epsilons[0]
    delta = config.sweep.delta
    if delta is None:
        delta = 0.5 * float(np.median([r.error for r in paths[first]]))
    summaries = [summarize(eps, paths[eps], delta, s3_values[eps]) for eps in config.sweep.epsilons]
    checks = ladder_checks(summaries)
    for check in checks:
        marker = "✓" if check.passed else "⚠️ "
        log_message(f"  {marker} {check.name}: {check.value:.6g}")

    return SweepReport(
        config_hash=config_hash(config),
        base_seed=config.sweep.base_seed,
        delta=delta,
        summaries=summaries,
        paths=paths,
        checks=checks,
        runtime_seconds=time.time() - start,
    )
