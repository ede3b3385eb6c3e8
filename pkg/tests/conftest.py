"""
Shared test fixtures and configuration
"""

import sys
import pytest
import numpy as np
import yaml
from pathlib import Path

# Project root
PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

CONFIG_DIR = PROJECT_ROOT / 'data' / 'configs'


@pytest.fixture(autouse=True)
def clear_harness_env(monkeypatch):
    """Keep a developer's .env overrides out of the tests."""
    for name in ('BRINKMAN_OUTPUT_DIR', 'BRINKMAN_WORKERS', 'BRINKMAN_BASE_SEED'):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def sine1d_basis():
    from src.galerkin.basis import build_basis
    return build_basis('scalar_sine_1d', 4, 128)


@pytest.fixture
def sine2d_basis():
    from src.galerkin.basis import build_basis
    return build_basis('scalar_sine_2d', 3, 12)


@pytest.fixture
def divfree_basis():
    from src.galerkin.basis import build_basis
    return build_basis('divfree_fourier_2d', 1, 16)


@pytest.fixture
def desk_spec():
    """alpha = 1 + 0.5 sin^2(2 pi y) tanh^2(v)."""
    from src.galerkin.coefficient import CellFunction, CellTerm, CoefficientSpec, FastResponse
    return CoefficientSpec(
        alpha0=1.0,
        terms=(CellTerm(g=CellFunction(type='sin_squared', wave_vector=(1,), amplitude=0.5),
                        h=FastResponse(type='tanh_squared')),),
    )


@pytest.fixture
def noise_1d(sine1d_basis):
    from src.stochastic.fastproc import NoiseModel
    return NoiseModel.from_decay(sine1d_basis, 0.5, 3.0)


@pytest.fixture
def small_problem(sine1d_basis, desk_spec, noise_1d):
    """Ten steps of the desk problem on a 4-mode basis."""
    from src.solver.slowsolver import ForcingProfile, Problem
    u0 = np.zeros(sine1d_basis.n_modes)
    u0[0] = 1.0
    return Problem(
        basis=sine1d_basis,
        spec=desk_spec,
        noise=noise_1d,
        T=0.02,
        dt=0.002,
        u0=u0,
        v0=np.zeros(sine1d_basis.n_modes),
        forcing=ForcingProfile.zero(sine1d_basis),
        snapshot_stride=2,
    )


@pytest.fixture
def config_dict(tmp_path):
    """Raw experiment mapping for a run that finishes in well under a second per path."""
    return {
        'problem': {
            'basis_kind': 'scalar_sine_1d',
            'n_per_dim': 4,
            'grid_points_per_dim': 128,
            'T': 0.02,
            'dt': 0.002,
            'u0_profile': {'type': 'mode', 'mode': 1},
            'v0_profile': {'type': 'zero'},
        },
        'coefficient': {
            'alpha0': 1.0,
            'terms': [{
                'g': {'type': 'sin_squared', 'wave_vector': [1], 'amplitude': 0.5},
                'h': {'type': 'tanh_squared'},
            }],
        },
        'noise': {'q0': 0.5, 'decay_p': 3.0},
        'sweep': {'epsilons': [0.25, 0.125], 'n_paths': 8, 'base_seed': 7, 'gh_nodes': 8},
        'output': {'dir': str(tmp_path / 'runs'), 'snapshot_stride': 2},
    }


@pytest.fixture
def config_file(tmp_path, config_dict):
    path = tmp_path / 'experiment.yaml'
    path.write_text(yaml.safe_dump(config_dict))
    return path


@pytest.fixture
def small_config(config_dict):
    from src.harness.config import parse_config
    return parse_config(config_dict)
