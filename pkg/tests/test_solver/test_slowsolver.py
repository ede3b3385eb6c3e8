"""Tests for src/solver/slowsolver.py."""

import pytest
import numpy as np
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(project_root))


def _constant_problem(basis, alpha0=2.0, T=0.02, dt=0.002):
    from src.galerkin.coefficient import CoefficientSpec
    from src.solver.slowsolver import ForcingProfile, Problem
    from src.stochastic.fastproc import NoiseModel
    u0 = np.array([1.0, 0.0, -0.5, 0.25])
    return Problem(basis=basis, spec=CoefficientSpec.constant(alpha0), noise=NoiseModel.zero(basis), T=T, dt=dt,
                   u0=u0, v0=u0.copy(), forcing=ForcingProfile.zero(basis))


class TestForcingProfile:
    """Tests for ForcingProfile."""

    def test_static(self):
        """Test a load without frequency is constant in time."""
        from src.solver.slowsolver import ForcingProfile
        f = ForcingProfile(coeffs=np.array([3.0, 4.0]))
        np.testing.assert_allclose(f.at(0.7), [3.0, 4.0])
        assert f.norm_at(0.7) == pytest.approx(5.0)
        assert not f.is_zero

    def test_periodic_factor(self):
        """Test cos(2 pi frequency t) modulation."""
        from src.solver.slowsolver import ForcingProfile
        f = ForcingProfile(coeffs=np.array([1.0]), frequency=2.0)
        assert f.factor(0.25) == pytest.approx(-1.0)
        assert f.norm_at(0.125) == pytest.approx(0.0, abs=1e-15)

    def test_zero(self, sine1d_basis):
        """Test the zero load."""
        from src.solver.slowsolver import ForcingProfile
        assert ForcingProfile.zero(sine1d_basis).is_zero


class TestProblem:
    """Tests for Problem validation."""

    def test_steps_and_times(self, small_problem):
        """Test n_steps and the time grid."""
        assert small_problem.n_steps == 10
        np.testing.assert_allclose(small_problem.times, np.linspace(0.0, 0.02, 11))

    def test_with_dt(self, small_problem):
        """Test with_dt keeps everything but the step."""
        halved = small_problem.with_dt(0.001)
        assert halved.n_steps == 20
        assert halved.spec is small_problem.spec
        np.testing.assert_array_equal(halved.u0, small_problem.u0)

    def test_wrong_initial_shape(self, small_problem):
        """Test u0 must have one coefficient per mode."""
        from src.solver.slowsolver import Problem
        with pytest.raises(ValueError, match="u0 has shape"):
            Problem(small_problem.basis, small_problem.spec, small_problem.noise, 0.02, 0.002,
                    np.zeros(3), small_problem.v0, small_problem.forcing)

    def test_T_not_multiple_of_dt(self, small_problem):
        """Test T must be an integer number of steps."""
        with pytest.raises(ValueError, match="integer multiple"):
            small_problem.with_dt(0.003)

    def test_noise_mismatch(self, small_problem, divfree_basis):
        """Test the noise model must match the basis."""
        from src.stochastic.fastproc import NoiseModel
        with pytest.raises(ValueError, match="noise has"):
            small_problem.with_noise(NoiseModel.zero(divfree_basis))

    def test_snapshot_stride(self, small_problem):
        """Test the snapshot stride must be positive."""
        from src.solver.slowsolver import Problem
        p = small_problem
        with pytest.raises(ValueError, match="snapshot_stride"):
            Problem(p.basis, p.spec, p.noise, p.T, p.dt, p.u0, p.v0, p.forcing, snapshot_stride=0)


class TestFrictionAndStep:
    """Tests for assemble_friction_matrix and slow_step."""

    def test_constant_friction_is_scaled_identity(self, sine1d_basis):
        """Test alpha0 I for a constant coefficient."""
        from src.galerkin.coefficient import CoefficientSpec
        from src.solver.slowsolver import assemble_friction_matrix
        A = assemble_friction_matrix(sine1d_basis, CoefficientSpec.constant(3.0), 0.25,
                                     np.zeros(sine1d_basis.n_points))
        np.testing.assert_allclose(A, 3.0 * np.eye(4), atol=1e-12)

    def test_friction_symmetric_and_coercive(self, sine1d_basis, desk_spec):
        """Test A is symmetric with eigenvalues at least alpha_min."""
        from src.solver.slowsolver import assemble_friction_matrix
        v = 2.0 * np.cos(5.0 * sine1d_basis.points[:, 0])
        A = assemble_friction_matrix(sine1d_basis, desk_spec, 0.125, v)
        np.testing.assert_array_equal(A, A.T)
        eigs = np.linalg.eigvalsh(A)
        assert eigs.min() >= desk_spec.alpha_min - 1e-12
        assert eigs.max() <= desk_spec.alpha_max + 1e-12

    def test_slow_step_diagonal(self, sine1d_basis):
        """Test the implicit step for diagonal friction."""
        from src.solver.slowsolver import slow_step
        a = np.array([1.0, 2.0, 0.0, -1.0])
        f = np.array([0.5, 0.0, 0.0, 0.0])
        out = slow_step(a, 2.0 * np.eye(4), f, 0.01, sine1d_basis)
        expected = (a + 0.01 * f) / (1.0 + 0.01 * (sine1d_basis.stiffness_diag + 2.0))
        np.testing.assert_allclose(out, expected)

    def test_slow_step_non_finite_matrix(self, sine1d_basis):
        """Test a broken friction matrix raises SolverError with a condition estimate."""
        from src.solver.slowsolver import slow_step
        from src.utils.errors import SolverError
        A = np.eye(4)
        A[1, 1] = np.nan
        with pytest.raises(SolverError) as exc:
            slow_step(np.ones(4), A, np.zeros(4), 0.01, sine1d_basis)
        assert exc.value.condition_estimate == float('inf')

    def test_slow_step_dt(self, sine1d_basis):
        """Test dt must be positive."""
        from src.solver.slowsolver import slow_step
        with pytest.raises(ValueError, match="dt must be positive"):
            slow_step(np.ones(4), np.eye(4), np.zeros(4), 0.0, sine1d_basis)


class TestSimulateCoupled:
    """Tests for simulate_coupled."""

    def test_constant_coefficient_closed_form(self, sine1d_basis):
        """Test a_n = a_0 / (1 + dt (lambda + alpha0))^n without noise."""
        from src.solver.slowsolver import simulate_coupled
        problem = _constant_problem(sine1d_basis)
        traj = simulate_coupled(problem, 0.01, rng=np.random.default_rng(0))
        factor = 1.0 + problem.dt * (sine1d_basis.stiffness_diag + 2.0)
        np.testing.assert_allclose(traj.final, problem.u0 / factor ** problem.n_steps, rtol=1e-12, atol=1e-15)

    def test_trajectory_layout(self, small_problem):
        """Test shapes, snapshot steps and labels."""
        from src.solver.slowsolver import simulate_coupled
        traj = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(0))
        assert traj.coeffs.shape == (11, 4)
        assert traj.fast_norm.shape == (11,)
        assert traj.snapshot_steps.tolist() == [0, 2, 4, 6, 8, 10]
        assert traj.fast_snapshots.shape == (6, 4)
        assert traj.eps == 0.125
        assert traj.label == "coupled"
        np.testing.assert_array_equal(traj.coeffs[0], small_problem.u0)

    def test_without_snapshots(self, small_problem):
        """Test keep_fast=False drops the fast snapshots."""
        from src.solver.slowsolver import simulate_coupled
        traj = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(0), keep_fast=False)
        assert traj.fast_snapshots is None
        assert not traj.has_snapshots

    def test_same_seed_same_path(self, small_problem):
        """Test runs are bitwise reproducible from the seed."""
        from src.solver.slowsolver import simulate_coupled
        from src.stochastic.streams import spawn_rng
        a = simulate_coupled(small_problem, 0.125, rng=spawn_rng(5, 2))
        b = simulate_coupled(small_problem, 0.125, rng=spawn_rng(5, 2))
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
        np.testing.assert_array_equal(a.fast_snapshots, b.fast_snapshots)

    def test_explicit_normals_match_stream(self, small_problem):
        """Test passing the normals explicitly reproduces the rng run."""
        from src.solver.slowsolver import simulate_coupled
        normals = np.random.default_rng(12).standard_normal((small_problem.n_steps, 4))
        a = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(12))
        b = simulate_coupled(small_problem, 0.125, normals=normals)
        np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-13, atol=1e-15)

    def test_rng_or_normals(self, small_problem):
        """Test exactly one noise source is required."""
        from src.solver.slowsolver import simulate_coupled
        with pytest.raises(ValueError, match="exactly one"):
            simulate_coupled(small_problem, 0.125)

    def test_unresolved_eps(self, small_problem):
        """Test eps below the grid resolution is refused."""
        from src.solver.slowsolver import simulate_coupled
        from src.utils.errors import QuadratureResolutionError
        with pytest.raises(QuadratureResolutionError):
            simulate_coupled(small_problem, 0.01, rng=np.random.default_rng(0))

    def test_constant_spec_skips_resolution_check(self, sine1d_basis):
        """Test a constant coefficient runs at any eps."""
        from src.solver.slowsolver import simulate_coupled
        traj = simulate_coupled(_constant_problem(sine1d_basis), 1e-4, rng=np.random.default_rng(0))
        assert np.all(np.isfinite(traj.coeffs))

    def test_non_finite_state_raises(self, small_problem):
        """Test NaN initial data is reported with its step."""
        from src.solver.slowsolver import Problem, simulate_coupled
        from src.utils.errors import SimulationError
        p = small_problem
        bad = Problem(p.basis, p.spec, p.noise, p.T, p.dt, np.full(4, np.nan), p.v0, p.forcing)
        with pytest.raises(SimulationError) as exc:
            simulate_coupled(bad, 0.125, rng=np.random.default_rng(0))
        assert exc.value.step == 0

    def test_unforced_energy_decays(self, small_problem):
        """Test ||u||_H is non-increasing without forcing."""
        from src.solver.slowsolver import simulate_coupled
        traj = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(3))
        assert np.all(np.diff(traj.norm_h) <= 1e-14)


class TestSplitting:
    """Tests for aggregate_normals and splitting_ladder."""

    def test_aggregated_step_matches_fine_steps(self):
        """Test one coarse exact step equals four fine ones on the same Brownian path."""
        from src.solver.slowsolver import aggregate_normals
        from src.stochastic.fastproc import ou_transition
        rng = np.random.default_rng(6)
        fine = rng.standard_normal((4, 3))
        q = np.array([1.0, 0.5, 0.0])
        u = np.array([0.2, -0.1, 1.0])
        b = np.array([1.0, 2.0, 3.0])
        dt, eps = 0.01, 0.05
        b_fine = b
        for z in fine:
            b_fine = ou_transition(b_fine, u, dt, eps, q, z)
        coarse = aggregate_normals(fine, 4, dt, eps)
        b_coarse = ou_transition(b, u, 4 * dt, eps, q, coarse[0])
        np.testing.assert_allclose(b_coarse, b_fine, rtol=1e-12)

    def test_aggregated_normals_are_standard(self):
        """Test aggregated normals keep unit variance."""
        from src.solver.slowsolver import aggregate_normals
        fine = np.random.default_rng(7).standard_normal((40000, 1))
        coarse = aggregate_normals(fine, 4, 0.01, 0.05)
        assert coarse.shape == (10000, 1)
        assert abs(coarse.var() - 1.0) < 4 * np.sqrt(2.0 / 10000)

    def test_factor_one_is_identity(self):
        """Test factor 1 returns the fine normals."""
        from src.solver.slowsolver import aggregate_normals
        fine = np.ones((3, 2))
        assert aggregate_normals(fine, 1, 0.1, 0.1) is fine

    def test_blocks_must_divide(self):
        """Test fine steps must split into whole blocks."""
        from src.solver.slowsolver import aggregate_normals
        with pytest.raises(ValueError, match="blocks"):
            aggregate_normals(np.ones((5, 2)), 2, 0.1, 0.1)

    def test_ladder(self, small_problem):
        """Test the dt ladder halves the step and its endpoint differences shrink."""
        from src.solver.slowsolver import splitting_ladder
        ladder = splitting_ladder(small_problem, 0.25, np.random.default_rng(10), levels=4)
        assert ladder.dts == pytest.approx([0.002, 0.001, 0.0005, 0.00025])
        assert len(ladder.endpoint_differences) == 3
        assert len(ladder.orders) == 2
        assert ladder.endpoint_differences[2] < ladder.endpoint_differences[0]

    def test_ladder_is_first_order(self, small_problem):
        """Test the Lie splitting converges with empirical order at least 0.9."""
        from src.solver.slowsolver import splitting_ladder
        ladder = splitting_ladder(small_problem, 0.25, np.random.default_rng(10), levels=4)
        assert min(ladder.orders) >= 0.9, ladder.orders

    def test_ladder_levels(self, small_problem):
        """Test at least three levels are needed for an order estimate."""
        from src.solver.slowsolver import splitting_ladder
        with pytest.raises(ValueError, match="at least 3"):
            splitting_ladder(small_problem, 0.25, np.random.default_rng(0), levels=2)


class TestEnergyDiagnostics:
    """Tests for energy_diagnostics."""

    def test_coupled_run_within_bounds(self, small_problem):
        """Test a coupled run satisfies every discrete energy bound."""
        from src.solver.slowsolver import energy_diagnostics, simulate_coupled
        traj = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(1))
        report = energy_diagnostics(traj, small_problem)
        assert report.passed, report.violations
        assert report.h_monotone
        assert report.sup_h <= report.h_bound

    def test_forced_run_within_bounds(self, small_problem):
        """Test the bounds with a periodic load."""
        from src.solver.slowsolver import ForcingProfile, Problem, energy_diagnostics, simulate_coupled
        p = small_problem
        forced = Problem(p.basis, p.spec, p.noise, p.T, p.dt, p.u0, p.v0,
                         ForcingProfile(coeffs=np.array([5.0, 0.0, 1.0, 0.0]), frequency=3.0))
        traj = simulate_coupled(forced, 0.125, rng=np.random.default_rng(1), keep_fast=False)
        assert energy_diagnostics(traj, forced).passed

    def test_violation_is_reported(self, small_problem):
        """Test an inflated norm is flagged instead of raised."""
        from src.solver.slowsolver import energy_diagnostics, simulate_coupled
        traj = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(1))
        traj.norm_h[-1] = 100.0
        report = energy_diagnostics(traj, small_problem)
        assert not report.passed
        assert any("Gronwall" in v for v in report.violations)

    def test_needs_small_dt(self, sine1d_basis):
        """Test the bounds are only defined for dt < 1."""
        from src.solver.slowsolver import energy_diagnostics, simulate_coupled
        problem = _constant_problem(sine1d_basis, T=1.0, dt=1.0)
        traj = simulate_coupled(problem, 0.5, rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="dt < 1"):
            energy_diagnostics(traj, problem)

    def test_h2_integral_within_bound(self, small_problem):
        """Test the recorded L2(0,T;H^2) seminorm stays under its discrete bound."""
        from src.solver.slowsolver import energy_diagnostics, simulate_coupled
        traj = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(2), keep_fast=False)
        report = energy_diagnostics(traj, small_problem)
        assert 0.0 < report.h2_integral <= report.h2_integral_bound

    def test_h2_violation_is_reported(self, small_problem):
        """Test an inflated final state breaks the H^2 bound and is recorded."""
        from src.solver.slowsolver import energy_diagnostics, simulate_coupled
        traj = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(2), keep_fast=False)
        traj.coeffs[-1] = 100.0 * traj.coeffs[-1]
        report = energy_diagnostics(traj, small_problem)
        assert report.h2_integral > report.h2_integral_bound
        assert any("Laplace" in v for v in report.violations)


class TestTimeIntegrals:
    """Tests for v_integral and h2_integral."""

    def test_closed_form(self, sine1d_basis):
        """Test both integrals against the closed-form constant-coefficient run."""
        from src.solver.slowsolver import h2_integral, simulate_coupled, v_integral
        problem = _constant_problem(sine1d_basis)
        traj = simulate_coupled(problem, 0.01, rng=np.random.default_rng(0))
        lam = sine1d_basis.stiffness_diag
        factor = 1.0 + problem.dt * (lam + 2.0)
        steps = np.arange(1, problem.n_steps + 1)[:, None]
        coeffs = problem.u0 / factor ** steps
        assert v_integral(traj) == pytest.approx(problem.dt * np.sum(lam * coeffs ** 2), rel=1e-10)
        assert h2_integral(traj, sine1d_basis) == pytest.approx(problem.dt * np.sum((lam * coeffs) ** 2), rel=1e-10)

    def test_h2_dominates_v(self, small_problem):
        """Test int ||Laplace u||^2 >= pi^2 int ||u||_V^2 since every eigenvalue is at least pi^2."""
        from src.solver.slowsolver import h2_integral, simulate_coupled, v_integral
        traj = simulate_coupled(small_problem, 0.125, rng=np.random.default_rng(3), keep_fast=False)
        assert h2_integral(traj, small_problem.basis) >= np.pi ** 2 * v_integral(traj) * (1 - 1e-12)
