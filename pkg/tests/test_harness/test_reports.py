"""Tests for src/harness/reports.py."""

import json

import pytest
import numpy as np
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(project_root))


@pytest.fixture
def sweep_report():
    """Hand-built two-eps report (no simulation)."""
    from src.harness.ensemble import CheckResult, EpsilonSummary, PathResult, SweepReport

    def summary(eps, median, s1, s3):
        return EpsilonSummary(epsilon=eps, n_paths=2, median=median, mean=median, q25=median, q75=median,
                              prob_exceed=0.0, s1_median_abs=s1, s2_median_abs=None, s3=s3,
                              fast_energy_median=0.5, sup_v_median=3.0)

    return SweepReport(
        config_hash='ab' * 32,
        base_seed=7,
        delta=0.05,
        summaries=[summary(0.2, 0.1, 0.02, 0.003), summary(0.1, 0.04, None, None)],
        paths={
            0.2: [PathResult(1, 0.11, 0.02, -0.01, 0.4, 3.0), PathResult(0, 0.09, 0.02, 0.01, 0.6, 3.0)],
            0.1: [PathResult(0, 0.04, None, None, 0.5, 3.0), PathResult(1, 0.04, None, None, 0.5, 3.0)],
        },
        checks=[CheckResult('median_error_decreasing', True, 0.04, 0.1)],
        runtime_seconds=1.25,
    )


class TestSweepOutputs:
    """Tests for write_sweep_outputs and the CSV writers."""

    def test_files_written(self, tmp_path, sweep_report):
        from src.harness.reports import write_sweep_outputs
        paths = write_sweep_outputs(tmp_path / 'out', sweep_report, n_paths=2)
        assert set(paths) == {'sweep', 'summary', 'checks', 'manifest'}
        assert all(p.exists() for p in paths.values())

    def test_sweep_csv_rows(self, tmp_path, sweep_report):
        from src.harness.reports import SWEEP_HEADER, read_csv, write_sweep_csv
        rows = read_csv(write_sweep_csv(tmp_path / 'sweep.csv', sweep_report))
        assert list(rows[0].keys()) == SWEEP_HEADER
        assert [(r['epsilon'], r['path']) for r in rows] == [('0.20000000000000001', '0'), ('0.20000000000000001', '1'),
                                                             ('0.10000000000000001', '0'), ('0.10000000000000001', '1')]
        assert float(rows[0]['error']) == 0.09
        assert rows[2]['s1'] == '' and rows[2]['s3'] == ''

    def test_summary_round_trip(self, tmp_path, sweep_report):
        from src.harness.reports import load_sweep_summary, write_sweep_outputs
        write_sweep_outputs(tmp_path, sweep_report, n_paths=2)
        rows = load_sweep_summary(tmp_path)
        assert [r['epsilon'] for r in rows] == [0.2, 0.1]
        assert rows[0]['n_paths'] == 2
        assert rows[0]['s3'] == 0.003
        assert rows[1]['s1_median_abs'] is None

    def test_checks_and_manifest(self, tmp_path, sweep_report):
        from src.harness.reports import write_sweep_outputs
        paths = write_sweep_outputs(tmp_path, sweep_report, n_paths=2)
        checks = json.loads(paths['checks'].read_text())
        assert checks['passed'] is True
        assert checks['delta'] == 0.05
        assert checks['checks'][0]['name'] == 'median_error_decreasing'
        manifest = json.loads(paths['manifest'].read_text())
        assert manifest['config_hash'] == 'ab' * 32
        assert manifest['seeds'] == {'base_seed': 7, 'path_indices': [0, 1], 'stream': 'fast_noise'}
        assert manifest['epsilons'] == [0.2, 0.1]
        assert manifest['wall_time_seconds'] == 1.25
        assert 'numpy' in manifest['versions']

    def test_csv_is_deterministic(self, tmp_path, sweep_report):
        """Test CSVs carry no timestamps and repeat byte for byte."""
        from src.harness.reports import write_sweep_outputs
        a = write_sweep_outputs(tmp_path / 'a', sweep_report, n_paths=2)
        sweep_report.runtime_seconds = 99.0
        b = write_sweep_outputs(tmp_path / 'b', sweep_report, n_paths=2)
        assert a['sweep'].read_bytes() == b['sweep'].read_bytes()
        assert a['summary'].read_bytes() == b['summary'].read_bytes()

    def test_missing_summary(self, tmp_path):
        from src.harness.reports import load_sweep_summary
        with pytest.raises(FileNotFoundError):
            load_sweep_summary(tmp_path)


class TestTrajectoryCsv:
    """Tests for write_trajectory_csv."""

    def test_layout(self, tmp_path, small_problem):
        from src.harness.reports import read_csv, write_trajectory_csv
        from src.solver.averaging import solve_averaged
        traj = solve_averaged(small_problem, n_nodes=8)
        rows = read_csv(write_trajectory_csv(tmp_path / 'traj.csv', traj))
        assert list(rows[0].keys()) == ['t', 'a_1', 'a_2', 'a_3', 'a_4', 'norm_H', 'norm_V']
        assert len(rows) == 11
        assert float(rows[0]['a_1']) == 1.0
        np.testing.assert_allclose([float(r['norm_H']) for r in rows], traj.norm_h, rtol=0, atol=0)


class TestRenderSummary:
    """Tests for the markdown summary."""

    def test_render(self, tmp_path, sweep_report):
        from src.harness.reports import summarize_directory, write_sweep_outputs
        write_sweep_outputs(tmp_path, sweep_report, n_paths=2)
        text = summarize_directory(tmp_path)
        assert text.startswith("## Convergence sweep")
        assert "median error" in text
        assert "## Checks" in text
        assert "median_error_decreasing" in text
        assert "pass" in text

    def test_render_without_checks(self):
        from src.harness.reports import render_summary
        rows = [{'epsilon': 0.1, 'n_paths': 4, 'median': 0.2, 'prob_exceed': 0.0}]
        text = render_summary(rows)
        assert "## Checks" not in text
        assert "0.2" in text
