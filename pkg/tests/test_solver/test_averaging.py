"""Tests for src/solver/averaging.py."""

import pytest
import numpy as np
import sys
from pathlib import Path
from unittest.mock import patch

# Add project root to path
project_root = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(project_root))


class TestGaussHermite:
    """Tests for gauss_hermite_expectation."""

    @pytest.mark.parametrize('k,exact', [(0, 1.0), (1, 0.0), (2, 1.0), (4, 3.0), (6, 15.0), (7, 0.0)])
    def test_standard_moments(self, k, exact):
        """Test E[Z^k] for a standard normal with 4 nodes (exact to degree 7)."""
        from src.solver.averaging import gauss_hermite_expectation
        got = gauss_hermite_expectation(lambda z: z[:, 0] ** k, 0.0, 1.0, n_nodes=4)
        assert got == pytest.approx(exact, abs=1e-12)

    def test_shifted_second_moment(self):
        """Test E[Z^2] = m^2 + s^2."""
        from src.solver.averaging import gauss_hermite_expectation
        assert gauss_hermite_expectation(lambda z: z[:, 0] ** 2, 0.7, 0.3, 2) == pytest.approx(0.49 + 0.3)

    def test_cross_moment_2d(self):
        """Test E[Z1 Z2] = m1 m2 + C12."""
        from src.solver.averaging import gauss_hermite_expectation
        mean = np.array([0.2, -0.4])
        cov = np.array([[0.5, 0.1], [0.1, 0.3]])
        got = gauss_hermite_expectation(lambda z: z[:, 0] * z[:, 1], mean, cov, 3)
        assert got == pytest.approx(-0.08 + 0.1, abs=1e-12)

    def test_degenerate_covariance(self):
        """Test a zero covariance evaluates g at the mean."""
        from src.solver.averaging import gauss_hermite_expectation
        assert gauss_hermite_expectation(lambda z: np.cos(z[:, 0]), 0.4, 0.0) == pytest.approx(np.cos(0.4))

    def test_not_psd(self):
        """Test indefinite covariances are rejected."""
        from src.solver.averaging import gauss_hermite_expectation
        with pytest.raises(ValueError, match="positive semidefinite"):
            gauss_hermite_expectation(lambda z: z[:, 0], np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_not_symmetric(self):
        """Test asymmetric covariances are rejected."""
        from src.solver.averaging import gauss_hermite_expectation
        with pytest.raises(ValueError, match="not symmetric"):
            gauss_hermite_expectation(lambda z: z[:, 0], np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_too_many_dimensions(self):
        """Test tensor rules stop at two dimensions."""
        from src.solver.averaging import gauss_hermite_expectation
        with pytest.raises(ValueError, match="at most 2"):
            gauss_hermite_expectation(lambda z: z[:, 0], np.zeros(3), np.eye(3))

    def test_too_few_nodes(self):
        """Test at least two nodes are required."""
        from src.solver.averaging import gauss_hermite_expectation
        with pytest.raises(ValueError, match="at least 2"):
            gauss_hermite_expectation(lambda z: z[:, 0], 0.0, 1.0, n_nodes=1)


class TestAlphaBar:
    """Tests for alpha_bar, alpha_bar_eps and the Monte Carlo reference."""

    def test_constant_coefficient(self, sine1d_basis, noise_1d):
        """Test abar = alpha0 for a constant coefficient."""
        from src.galerkin.coefficient import CoefficientSpec
        from src.solver.averaging import alpha_bar
        values = alpha_bar(CoefficientSpec.constant(2.5), sine1d_basis, noise_1d, np.ones(4))
        np.testing.assert_allclose(values, 2.5)

    def test_zero_noise_reduces_to_cell_average(self, sine1d_basis, desk_spec):
        """Test without noise abar(xi) is the cell average at xi(x)."""
        from src.galerkin.basis import evaluate_on_grid
        from src.galerkin.coefficient import cell_average
        from src.solver.averaging import alpha_bar
        from src.stochastic.fastproc import NoiseModel
        xi = np.array([0.8, 0.0, 0.2, 0.0])
        values = alpha_bar(desk_spec, sine1d_basis, NoiseModel.zero(sine1d_basis), xi)
        np.testing.assert_allclose(values, cell_average(desk_spec, evaluate_on_grid(sine1d_basis, xi)), atol=1e-13)

    def test_zero_noise_eps_version(self, sine1d_basis, desk_spec):
        """Test without noise abar_eps(xi) is alpha(x/eps, xi(x))."""
        from src.galerkin.basis import evaluate_on_grid
        from src.galerkin.coefficient import alpha_eps_on_grid
        from src.solver.averaging import alpha_bar_eps
        from src.stochastic.fastproc import NoiseModel
        xi = np.array([0.8, 0.0, 0.2, 0.0])
        values = alpha_bar_eps(desk_spec, sine1d_basis, NoiseModel.zero(sine1d_basis), 0.125, xi)
        expected = alpha_eps_on_grid(desk_spec, sine1d_basis, 0.125, evaluate_on_grid(sine1d_basis, xi))
        np.testing.assert_allclose(values, expected, atol=1e-13)

    def test_within_bounds(self, sine1d_basis, noise_1d, desk_spec):
        """Test alpha_min <= abar <= alpha_max."""
        from src.solver.averaging import alpha_bar
        values = alpha_bar(desk_spec, sine1d_basis, noise_1d, np.array([2.0, -1.0, 0.5, 0.0]))
        assert np.all(values >= desk_spec.alpha_min)
        assert np.all(values <= desk_spec.alpha_max)

    def test_matches_function_space_monte_carlo(self, sine1d_basis, noise_1d, desk_spec):
        """Test Gauss-Hermite abar against whole-field sampling within 4 standard errors."""
        from src.solver.averaging import alpha_bar, alpha_bar_monte_carlo
        xi = np.array([0.8, 0.0, 0.2, 0.0])
        idx = np.array([16, 40, 64, 100])
        mean, se = alpha_bar_monte_carlo(desk_spec, sine1d_basis, noise_1d, xi, n_samples=20000,
                                         rng=np.random.default_rng(17), point_indices=idx)
        values = alpha_bar(desk_spec, sine1d_basis, noise_1d, xi)
        assert np.all(np.abs(values[idx] - mean) <= 4 * se)

    def test_node_doubling(self, sine1d_basis, noise_1d, desk_spec):
        """Test 20 and 40 Gauss-Hermite nodes agree."""
        from src.solver.averaging import alpha_bar
        xi = np.array([0.8, 0.0, 0.2, 0.0])
        a = alpha_bar(desk_spec, sine1d_basis, noise_1d, xi, n_nodes=20)
        b = alpha_bar(desk_spec, sine1d_basis, noise_1d, xi, n_nodes=40)
        np.testing.assert_allclose(a, b, rtol=1e-8)

    def test_vector_fast_values(self, divfree_basis):
        """Test abar for a divergence-free fast field with 2d Gauss-Hermite."""
        from src.galerkin.coefficient import CellFunction, CellTerm, CoefficientSpec, FastResponse
        from src.solver.averaging import alpha_bar
        from src.stochastic.fastproc import NoiseModel
        spec = CoefficientSpec(
            alpha0=1.0,
            terms=(CellTerm(g=CellFunction(type='sin_squared', wave_vector=(1, 0), amplitude=0.4),
                            h=FastResponse(type='rational')),),
            y_dim=2, v_dim=2,
        )
        noise = NoiseModel.from_decay(divfree_basis, 0.5, 3.0)
        values = alpha_bar(spec, divfree_basis, noise, np.zeros(divfree_basis.n_modes), n_nodes=8)
        assert values.shape == (divfree_basis.n_points,)
        assert np.all((values > 1.0) & (values <= 1.2))

    def test_dimension_mismatch(self, divfree_basis, desk_spec):
        """Test a scalar coefficient on a vector basis is rejected."""
        from src.solver.averaging import alpha_bar
        from src.stochastic.fastproc import NoiseModel
        with pytest.raises(ValueError, match="v_dim"):
            alpha_bar(desk_spec, divfree_basis, NoiseModel.zero(divfree_basis), np.zeros(divfree_basis.n_modes))


class TestAveragedCoefficientTable:
    """Tests for the tabulated averaged coefficient."""

    def test_lookup_matches_direct(self, sine1d_basis, noise_1d, desk_spec):
        """Test spline lookup inside the range and the direct fallback outside it."""
        from src.galerkin.basis import evaluate_on_grid
        from src.solver.averaging import AveragedCoefficientTable, alpha_bar
        table = AveragedCoefficientTable.build(desk_spec, sine1d_basis, noise_1d, -1.0, 1.0, n_means=257)
        xi = np.array([1.2, 0.0, 0.3, 0.0])
        field = evaluate_on_grid(sine1d_basis, xi)
        assert np.any(np.abs(field) > 1.0)
        np.testing.assert_allclose(table.lookup(field), alpha_bar(desk_spec, sine1d_basis, noise_1d, xi), atol=1e-6)

    def test_vector_basis_rejected(self, divfree_basis):
        """Test tables are scalar-only."""
        from src.galerkin.coefficient import CoefficientSpec
        from src.solver.averaging import AveragedCoefficientTable
        from src.stochastic.fastproc import NoiseModel
        with pytest.raises(ValueError, match="scalar"):
            AveragedCoefficientTable.build(CoefficientSpec.constant(1.0, y_dim=2, v_dim=2), divfree_basis,
                                           NoiseModel.zero(divfree_basis), -1.0, 1.0)

    def test_save_load(self, tmp_path, sine1d_basis, noise_1d, desk_spec):
        """Test the npz round trip keeps values and the coefficient."""
        from src.solver.averaging import AveragedCoefficientTable
        table = AveragedCoefficientTable.build(desk_spec, sine1d_basis, noise_1d, -1.0, 1.0, n_means=33)
        path = table.save(tmp_path)
        assert path.name == f"alpha_bar_{table.key}.npz"
        loaded = AveragedCoefficientTable.load(path)
        np.testing.assert_array_equal(loaded.values, table.values)
        assert loaded.spec == desk_spec
        assert loaded.key == table.key

    def test_load_or_build_uses_cache(self, tmp_path, sine1d_basis, noise_1d, desk_spec):
        """Test a second call loads the cached file instead of rebuilding."""
        from src.solver.averaging import AveragedCoefficientTable
        first = AveragedCoefficientTable.load_or_build(tmp_path, desk_spec, sine1d_basis, noise_1d, -1.0, 1.0,
                                                       n_means=33)
        with patch.object(AveragedCoefficientTable, 'build') as mock_build:
            second = AveragedCoefficientTable.load_or_build(tmp_path, desk_spec, sine1d_basis, noise_1d,
                                                            -1.0, 1.0, n_means=33)
        mock_build.assert_not_called()
        assert second.key == first.key

    def test_cache_key_tracks_inputs(self, sine1d_basis, noise_1d, desk_spec):
        """Test the key changes with the noise model."""
        from src.solver.averaging import AveragedCoefficientTable
        from src.stochastic.fastproc import NoiseModel
        grid = np.linspace(-1.0, 1.0, 33)
        a = AveragedCoefficientTable.cache_key(desk_spec, noise_1d, sine1d_basis, 20, grid)
        b = AveragedCoefficientTable.cache_key(desk_spec, NoiseModel.zero(sine1d_basis), sine1d_basis, 20, grid)
        assert a != b


class TestSolveAveraged:
    """Tests for the averaged solve and Picard iteration."""

    def test_constant_closed_form(self, sine1d_basis, noise_1d):
        """Test the averaged run of a constant coefficient."""
        from src.galerkin.coefficient import CoefficientSpec
        from src.solver.averaging import solve_averaged
        from src.solver.slowsolver import ForcingProfile, Problem
        u0 = np.array([1.0, 0.5, 0.0, 0.0])
        problem = Problem(sine1d_basis, CoefficientSpec.constant(2.0), noise_1d, 0.02, 0.002, u0, u0,
                          ForcingProfile.zero(sine1d_basis))
        traj = solve_averaged(problem)
        factor = 1.0 + 0.002 * (sine1d_basis.stiffness_diag + 2.0)
        np.testing.assert_allclose(traj.final, u0 / factor ** 10, rtol=1e-12, atol=1e-15)
        assert traj.label == "averaged"
        assert traj.eps is None
        assert traj.fast_norm is None

    def test_picard_close_to_lagged(self, small_problem):
        """Test Picard and lagged friction differ by O(dt)."""
        from src.solver.averaging import solve_averaged
        lagged = solve_averaged(small_problem)
        picard = solve_averaged(small_problem, picard=True)
        assert picard.label == "averaged_picard"
        assert np.max(np.abs(picard.coeffs - lagged.coeffs)) < 1e-2

    def test_table_agrees_with_direct(self, small_problem):
        """Test the tabulated solve tracks the direct solve."""
        from src.solver.averaging import AveragedCoefficientTable, solve_averaged
        p = small_problem
        table = AveragedCoefficientTable.build(p.spec, p.basis, p.noise, -2.0, 2.0)
        direct = solve_averaged(p)
        tabulated = solve_averaged(p, table=table)
        np.testing.assert_allclose(tabulated.coeffs, direct.coeffs, atol=1e-7)

    def test_picard_failure(self, small_problem):
        """Test a capped iteration raises with the residual history."""
        from src.solver.averaging import picard_step
        from src.utils.errors import PicardConvergenceError
        p = small_problem
        with pytest.raises(PicardConvergenceError) as exc:
            picard_step(p, p.u0, np.zeros(4), p.u0, step=1, max_iter=1)
        assert exc.value.step == 1
        assert len(exc.value.residuals) == 1

    def test_picard_uniqueness(self, small_problem):
        """Test two starting guesses converge to the same step solution."""
        from src.solver.averaging import picard_uniqueness_check
        assert picard_uniqueness_check(small_problem, n_steps=5) < 1e-9


class TestResolventPsi:
    """Tests for resolvent_psi."""

    def _args(self, basis, noise, spec):
        from src.galerkin.basis import unit_vector
        return spec, basis, noise, np.zeros(basis.n_modes), unit_vector(basis, 0), unit_vector(basis, 0)

    def test_constant_is_zero(self, sine1d_basis, noise_1d):
        """Test Psi vanishes identically for a constant coefficient."""
        from src.galerkin.coefficient import CoefficientSpec
        from src.solver.averaging import resolvent_psi
        args = self._args(sine1d_basis, noise_1d, CoefficientSpec.constant(1.0))
        assert resolvent_psi(*args, eps=0.125) == 0.0

    def test_linear_in_phi(self, sine1d_basis, noise_1d, desk_spec):
        """Test Psi scales with the test function."""
        from src.solver.averaging import resolvent_psi
        spec, basis, noise, eta, xi, phi = self._args(sine1d_basis, noise_1d, desk_spec)
        base = resolvent_psi(spec, basis, noise, eta, xi, phi, 0.125)
        scaled = resolvent_psi(spec, basis, noise, eta, xi, 2.0 * phi, 0.125)
        assert base != 0.0
        assert scaled == pytest.approx(2.0 * base, rel=1e-12)

    def test_truncated_integral_converges(self, sine1d_basis, noise_1d, desk_spec):
        """Test the panel rule on [0, 40] agrees with the Gauss-Jacobi rule on [0, inf)."""
        from src.solver.averaging import resolvent_psi
        args = self._args(sine1d_basis, noise_1d, desk_spec)
        full = resolvent_psi(*args, eps=0.125, decay_rate=0.5)
        truncated = resolvent_psi(*args, eps=0.125, decay_rate=0.5, t_max=40.0)
        assert truncated == pytest.approx(full, rel=1e-6)

    def test_bounded_as_decay_rate_shrinks(self, sine1d_basis, noise_1d, desk_spec):
        """Test |Psi| stays bounded for c in {1, 0.1, 0.01}."""
        from src.solver.averaging import resolvent_psi
        args = self._args(sine1d_basis, noise_1d, desk_spec)
        values = [abs(resolvent_psi(*args, eps=0.125, decay_rate=c)) for c in (1.0, 0.1, 0.01)]
        assert max(values) / min(values) < 5.0

    def test_invalid_decay_rate(self, sine1d_basis, noise_1d, desk_spec):
        """Test the decay rate must be positive."""
        from src.solver.averaging import resolvent_psi
        args = self._args(sine1d_basis, noise_1d, desk_spec)
        with pytest.raises(ValueError, match="decay_rate"):
            resolvent_psi(*args, eps=0.125, decay_rate=-1.0)

    def test_unresolved_eps(self, sine1d_basis, noise_1d, desk_spec):
        """Test eps must be resolved by the grid."""
        from src.solver.averaging import resolvent_psi
        from src.utils.errors import QuadratureResolutionError
        args = self._args(sine1d_basis, noise_1d, desk_spec)
        with pytest.raises(QuadratureResolutionError):
            resolvent_psi(*args, eps=0.01)

    def test_constant_skips_resolution_check(self, sine1d_basis, noise_1d):
        """Test a constant coefficient returns zero even on a grid too coarse for eps."""
        from src.galerkin.coefficient import CoefficientSpec
        from src.solver.averaging import alpha_bar_eps, resolvent_psi
        spec = CoefficientSpec.constant(1.5)
        args = self._args(sine1d_basis, noise_1d, spec)
        assert resolvent_psi(*args, eps=0.01) == 0.0
        values = alpha_bar_eps(spec, sine1d_basis, noise_1d, 0.01, np.zeros(sine1d_basis.n_modes))
        np.testing.assert_array_equal(values, np.full(sine1d_basis.n_points, 1.5))

    def test_eps_must_be_positive(self, sine1d_basis, noise_1d):
        """Test a non-positive eps is rejected before the constant shortcut."""
        from src.galerkin.coefficient import CoefficientSpec
        from src.solver.averaging import resolvent_psi
        args = self._args(sine1d_basis, noise_1d, CoefficientSpec.constant(1.0))
        with pytest.raises(ValueError, match="eps must be positive"):
            resolvent_psi(*args, eps=0.0)


class TestAlphaBarLipschitz:
    """Tests for the Lipschitz bound of abar in the slow field."""

    def test_pointwise_lipschitz(self, sine1d_basis, noise_1d, desk_spec):
        """Test |abar(xi) - abar(xi')| <= C |xi - xi'| at every grid point."""
        from src.galerkin.basis import evaluate_on_grid
        from src.solver.averaging import alpha_bar
        rng = np.random.default_rng(21)
        C = desk_spec.lipschitz_constant
        for _ in range(20):
            xi = rng.standard_normal(sine1d_basis.n_modes)
            xi_shifted = xi + 0.3 * rng.standard_normal(sine1d_basis.n_modes)
            diff = np.abs(alpha_bar(desk_spec, sine1d_basis, noise_1d, xi)
                          - alpha_bar(desk_spec, sine1d_basis, noise_1d, xi_shifted))
            field_diff = np.abs(evaluate_on_grid(sine1d_basis, xi) - evaluate_on_grid(sine1d_basis, xi_shifted))
            assert np.all(diff <= C * field_diff + 1e-12)
