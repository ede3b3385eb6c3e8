"""
Experiment configuration: YAML file -> validated pydantic models -> Problem.

Environment overrides (read after load_dotenv):
    BRINKMAN_OUTPUT_DIR   output.dir
    BRINKMAN_WORKERS      sweep.workers
    BRINKMAN_BASE_SEED    sweep.base_seed
"""

import os
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.galerkin.basis import BasisKind, GalerkinBasis, build_basis, grid_floor, project
from src.galerkin.coefficient import CellTerm, CoefficientSpec, MIN_POINTS_PER_CELL
from src.solver.slowsolver import ForcingProfile, Problem
from src.stochastic.fastproc import NoiseModel
from src.utils.errors import ConfigError
from src.utils.io import canonical_json, sha256_hex

# Load environment variables
load_dotenv()

ENV_OUTPUT_DIR = "BRINKMAN_OUTPUT_DIR"
ENV_WORKERS = "BRINKMAN_WORKERS"
ENV_BASE_SEED = "BRINKMAN_BASE_SEED"


def clean_env_value(value):
    if value is None:
        return None
    value = value.strip()
    if (value.startswith("'") and value.endswith("'")) or \
       (value.startswith('"') and value.endswith('"')):
        value = value[1:-1]
    return value


# ========== CONFIG MODELS ==========

class ProfileConfig(BaseModel):
    """Initial field: zero, a single mode, a smooth bump, explicit coefficients or (v0 only) u0."""

    model_config = ConfigDict(extra='forbid')

    type: Literal['zero', 'mode', 'bump', 'coefficients', 'match_u0'] = 'zero'
    mode: int = Field(1, ge=1, description="1-based mode slot for type=mode")
    amplitude: float = 1.0
    coefficients: Optional[List[float]] = None

    @model_validator(mode='after')
    def _coefficients_present(self):
        if self.type == 'coefficients' and not self.coefficients:
            raise ValueError("type=coefficients needs a non-empty coefficients list")
        return self


class ForcingConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    type: Literal['zero', 'mode', 'bump'] = 'zero'
    mode: int = Field(1, ge=1)
    amplitude: float = 1.0
    frequency: Optional[float] = Field(None, ge=0, description="cos(2 pi frequency t) time factor")


class ProblemConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    basis_kind: BasisKind = BasisKind.SCALAR_SINE_1D
    n_per_dim: int = Field(16, ge=1, le=64)
    grid_points_per_dim: int = Field(512, ge=2)
    T: float = Field(0.5, gt=0)
    dt: float = Field(1e-3, gt=0, lt=1)
    u0_profile: ProfileConfig = Field(default_factory=lambda: ProfileConfig(type='mode'))
    v0_profile: ProfileConfig = Field(default_factory=ProfileConfig)
    forcing: ForcingConfig = Field(default_factory=ForcingConfig)

    @model_validator(mode='after')
    def _grid_and_steps(self):
        floor = grid_floor(self.basis_kind, self.n_per_dim)
        if self.grid_points_per_dim < floor:
            raise ValueError(
                f"grid_points_per_dim={self.grid_points_per_dim} is below the floor {floor} "
                f"for n_per_dim={self.n_per_dim}"
            )
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T={self.T} must be an integer multiple of dt={self.dt}")
        if self.u0_profile.type == 'match_u0':
            raise ValueError("u0_profile cannot be match_u0")
        return self

    @property
    def dim(self) -> int:
        return 1 if self.basis_kind == BasisKind.SCALAR_SINE_1D else 2

    @property
    def v_dim(self) -> int:
        return 2 if self.basis_kind == BasisKind.DIVFREE_FOURIER_2D else 1


class CoefficientConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    alpha0: float = Field(1.0, gt=0)
    terms: List[CellTerm] = Field(default_factory=list)


class NoiseConfig(BaseModel):
    """Either a decay profile q_k = q0 |k|^-p or an explicit per-mode list."""

    model_config = ConfigDict(extra='forbid')

    q0: Optional[float] = Field(None, ge=0)
    decay_p: Optional[float] = Field(None, gt=0)
    q_list: Optional[List[float]] = None

    @model_validator(mode='after')
    def _one_form(self):
        has_decay = self.q0 is not None or self.decay_p is not None
        if has_decay and self.q_list is not None:
            raise ValueError("give either q0/decay_p or q_list, not both")
        if self.q_list is None and (self.q0 is None or self.decay_p is None):
            raise ValueError("q0 and decay_p are both required unless q_list is given")
        if self.q_list is not None and any(q < 0 for q in self.q_list):
            raise ValueError("q_list entries must be nonnegative")
        return self


class SweepSettings(BaseModel):
    model_config = ConfigDict(extra='forbid')

    epsilons: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025], min_length=1)
    n_paths: int = Field(32, ge=8)
    base_seed: int = Field(20240601, ge=0)
    delta: Optional[float] = Field(None, gt=0)
    phi_mode: int = Field(1, ge=1, description="1-based mode used as the diagnostic test function")
    workers: int = Field(1, ge=1)
    gh_nodes: int = Field(20, ge=2)

    @field_validator('epsilons')
    @classmethod
    def _strictly_decreasing(cls, v):
        if any(e <= 0 for e in v):
            raise ValueError("epsilons must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        return v


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    dir: str = "runs"
    snapshot_stride: int = Field(1, ge=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    coefficient: CoefficientConfig = Field(default_factory=CoefficientConfig)
    noise: NoiseConfig = Field(default_factory=lambda: NoiseConfig(q0=0.5, decay_p=3.0))
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode='after')
    def _cross_checks(self):
        try:
            self.build_spec()
        except ValidationError as e:
            raise ValueError(f"coefficient: {e.errors()[0]['msg']}")
        if self.coefficient.terms:
            eps_min = min(self.sweep.epsilons)
            if self.problem.grid_points_per_dim * eps_min < MIN_POINTS_PER_CELL:
                raise ValueError(
                    f"problem: grid_points_per_dim={self.problem.grid_points_per_dim} gives fewer than "
                    f"{MIN_POINTS_PER_CELL} points per cell at eps={eps_min}"
                )
        if self.noise.decay_p is not None and self.noise.decay_p <= self.problem.dim:
            raise ValueError(f"noise: decay_p={self.noise.decay_p} must exceed the dimension {self.problem.dim}")
        return self

    def build_spec(self) -> CoefficientSpec:
        return CoefficientSpec(
            alpha0=self.coefficient.alpha0,
            terms=tuple(self.coefficient.terms),
            y_dim=self.problem.dim,
            v_dim=self.problem.v_dim,
        )


# ========== LOADING ==========

def _section_of(error: ValidationError) -> str:
    for err in error.errors():
        if err.get('loc'):
            return str(err['loc'][0])
        # model-level checks prefix their message with the section name
        head = str(err.get('msg', '')).replace('Value error, ', '').split(':', 1)[0]
        if head in ExperimentConfig.model_fields:
            return head
    return 'config'


def apply_env_overrides(raw: dict) -> dict:
    output_dir = clean_env_value(os.getenv(ENV_OUTPUT_DIR))
    workers = clean_env_value(os.getenv(ENV_WORKERS))
    base_seed = clean_env_value(os.getenv(ENV_BASE_SEED))

    if output_dir:
        raw.setdefault('output', {})['dir'] = output_dir
    for env_name, key, value in ((ENV_WORKERS, 'workers', workers), (ENV_BASE_SEED, 'base_seed', base_seed)):
        if value:
            try:
                raw.setdefault('sweep', {})[key] = int(value)
            except ValueError:
                raise ConfigError('sweep', f"{env_name}={value!r} is not an integer")
    return raw


def parse_config(raw: Union[dict, None], use_env: bool = True) -> ExperimentConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError('config', f"expected a mapping at the top level, got {type(raw).__name__}")
    raw = dict(raw)
    if use_env:
        raw = apply_env_overrides(raw)
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_section_of(e), str(e)) from e


def load_config(path: Union[str, Path], use_env: bool = True) -> ExperimentConfig:
    """Read a YAML experiment file; malformed content raises ConfigError."""
    path = Path(path)
    if not path.exists():
        raise ConfigError('file', f"config file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError('file', f"invalid YAML in {path}: {e}") from e
    return parse_config(raw, use_env=use_env)


def config_hash(config: ExperimentConfig) -> str:
    return sha256_hex(canonical_json(config.model_dump(mode='json')))


# ========== BUILDING ==========

def _bump_field(basis: GalerkinBasis) -> np.ndarray:
    """Smooth unit-scale profile: x^2(1-x)^2 bump (scalar) or a Taylor-Green vortex (vector)."""
    x = basis.points
    if basis.kind == BasisKind.SCALAR_SINE_1D:
        return 16.0 * x[:, 0] ** 2 * (1.0 - x[:, 0]) ** 2
    if basis.kind == BasisKind.SCALAR_SINE_2D:
        return 256.0 * np.prod(x ** 2 * (1.0 - x) ** 2, axis=1)
    sx, cx = np.sin(2 * np.pi * x[:, 0]), np.cos(2 * np.pi * x[:, 0])
    sy, cy = np.sin(2 * np.pi * x[:, 1]), np.cos(2 * np.pi * x[:, 1])
    return np.stack([sx * cy, -cx * sy], axis=1)


def _mode_slot(basis: GalerkinBasis, mode: int, section: str) -> int:
    if mode > basis.n_modes:
        raise ConfigError(section, f"mode {mode} exceeds the {basis.n_modes} available modes")
    return mode - 1


def build_profile(basis: GalerkinBasis, profile: ProfileConfig, section: str, u0: Optional[np.ndarray] = None) -> np.ndarray:
    if profile.type == 'zero':
        return np.zeros(basis.n_modes)
    if profile.type == 'mode':
        c = np.zeros(basis.n_modes)
        c[_mode_slot(basis, profile.mode, section)] = profile.amplitude
        return c
    if profile.type == 'bump':
        return profile.amplitude * project(basis, _bump_field(basis))
    if profile.type == 'coefficients':
        if len(profile.coefficients) != basis.n_modes:
            raise ConfigError(section, f"{len(profile.coefficients)} coefficients given, basis has {basis.n_modes} modes")
        return np.asarray(profile.coefficients, dtype=float)
    if u0 is None:
        raise ConfigError(section, "match_u0 is only valid for v0_profile")
    return np.array(u0)


def build_forcing(basis: GalerkinBasis, forcing: ForcingConfig) -> ForcingProfile:
    shape = ProfileConfig(type=forcing.type, mode=forcing.mode, amplitude=forcing.amplitude)
    coeffs = build_profile(basis, shape, 'problem.forcing')
    return ForcingProfile(coeffs=coeffs, frequency=forcing.frequency)


def build_noise(basis: GalerkinBasis, noise: NoiseConfig) -> NoiseModel:
    try:
        if noise.q_list is not None:
            return NoiseModel.from_list(basis, noise.q_list)
        return NoiseModel.from_decay(basis, noise.q0, noise.decay_p)
    except ValueError as e:
        raise ConfigError('noise', str(e)) from e


def build_problem(config: ExperimentConfig) -> Problem:
    """Immutable Problem from a validated config (basis, coefficient, noise, data)."""
    p = config.problem
    basis = build_basis(p.basis_kind, p.n_per_dim, p.grid_points_per_dim)
    u0 = build_profile(basis, p.u0_profile, 'problem.u0_profile')
    v0 = build_profile(basis, p.v0_profile, 'problem.v0_profile', u0=u0)
    return Problem(
        basis=basis,
        spec=config.build_spec(),
        noise=build_noise(basis, config.noise),
        T=p.T,
        dt=p.dt,
        u0=u0,
        v0=v0,
        forcing=build_forcing(basis, p.forcing),
        snapshot_stride=config.output.snapshot_stride,
    )


def phi_coefficients(config: ExperimentConfig, basis: GalerkinBasis) -> np.ndarray:
    """Diagnostic test function: a single basis mode (the lowest by default)."""
    c = np.zeros(basis.n_modes)
    c[_mode_slot(basis, config.sweep.phi_mode, 'sweep')] = 1.0
    return c
