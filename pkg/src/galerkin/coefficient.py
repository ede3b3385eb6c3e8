"""
Brinkman friction coefficient alpha(y, v).

The coefficient family is separable:

    alpha(y, v) = alpha0 + sum_j g_j(y) h_j(v)

with Y-periodic trigonometric cell functions g_j and bounded C^1 fast
responses h_j in {1/(1+|v|^2), tanh^2(v . d)}. Every bound the solvers need
(positivity margin, sup, Lipschitz constant in v) follows from the term list.
"""

from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.galerkin.basis import GalerkinBasis, as_components, evaluate_on_grid
from src.utils.errors import QuadratureResolutionError
from src.utils.io import canonical_json, sha256_hex

# Minimum grid points per eps-cell per dimension for oscillatory integrals
MIN_POINTS_PER_CELL = 8

# sup |h'| for the supported fast responses
_RATIONAL_SUP_DERIVATIVE = 9.0 / (8.0 * np.sqrt(3.0))
_TANH_SQUARED_SUP_DERIVATIVE = 4.0 / (3.0 * np.sqrt(3.0))


class CellFunction(BaseModel):
    """Y-periodic trigonometric factor g(y) with sup|g| = |amplitude|."""

    model_config = ConfigDict(frozen=True)

    type: Literal['sin', 'cos', 'sin_product', 'sin_squared']
    wave_vector: Tuple[int, ...] = Field(..., min_length=1, max_length=2)
    amplitude: float

    @field_validator('wave_vector')
    @classmethod
    def _nonzero(cls, v):
        if all(k == 0 for k in v):
            raise ValueError("wave_vector must have a nonzero entry")
        return v

    @model_validator(mode='after')
    def _product_needs_all_axes(self):
        if self.type == 'sin_product' and any(k == 0 for k in self.wave_vector):
            raise ValueError("sin_product needs a nonzero wave number on every axis")
        return self

    @property
    def sup(self) -> float:
        return abs(self.amplitude)

    @property
    def max_frequency(self) -> int:
        top = max(abs(k) for k in self.wave_vector)
        return 2 * top if self.type == 'sin_squared' else top

    @property
    def exact_mean(self) -> float:
        # every supported type integrates to zero over Y except sin^2
        return 0.5 * self.amplitude if self.type == 'sin_squared' else 0.0


class FastResponse(BaseModel):
    """Bounded C^1 function of the fast value with 0 <= h <= 1."""

    model_config = ConfigDict(frozen=True)

    type: Literal['rational', 'tanh_squared']
    direction: Optional[Tuple[float, ...]] = None

    @field_validator('direction')
    @classmethod
    def _unit_direction(cls, v):
        if v is None:
            return v
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("direction must be a nonzero vector")
        return tuple(float(c) / norm for c in v)

    @property
    def sup(self) -> float:
        return 1.0

    @property
    def sup_derivative(self) -> float:
        if self.type == 'rational':
            return _RATIONAL_SUP_DERIVATIVE
        return _TANH_SQUARED_SUP_DERIVATIVE


class CellTerm(BaseModel):
    model_config = ConfigDict(frozen=True)

    g: CellFunction
    h: FastResponse


class CoefficientSpec(BaseModel):
    """
    Coefficient alpha(y, v) = alpha0 + sum_j g_j(y) h_j(v).

    Positivity (alpha_min > 0) is enforced at construction; y_dim is the
    dimension of the periodic cell and v_dim the dimension of the fast value.
    """

    model_config = ConfigDict(frozen=True)

    alpha0: float = Field(..., gt=0)
    terms: Tuple[CellTerm, ...] = ()
    y_dim: int = Field(1, ge=1, le=2)
    v_dim: int = Field(1, ge=1, le=2)

    @model_validator(mode='after')
    def _check_terms(self):
        for idx, term in enumerate(self.terms):
            if len(term.g.wave_vector) != self.y_dim:
                raise ValueError(
                    f"term {idx}: wave_vector has length {len(term.g.wave_vector)}, expected y_dim={self.y_dim}"
                )
            if term.h.direction is not None and len(term.h.direction) != self.v_dim:
                raise ValueError(
                    f"term {idx}: direction has length {len(term.h.direction)}, expected v_dim={self.v_dim}"
                )
        if self.alpha_min <= 0.0:
            raise ValueError(
                f"coefficient is not uniformly positive: alpha0={self.alpha0} minus "
                f"sum |g| sup|h| gives {self.alpha_min:.6g}"
            )
        return self

    @property
    def alpha_min(self) -> float:
        """Positivity margin alpha0 - sum sup|g_j| sup|h_j|."""
        return self.alpha0 - sum(t.g.sup * t.h.sup for t in self.terms)

    @property
    def alpha_max(self) -> float:
        return self.alpha0 + sum(t.g.sup * t.h.sup for t in self.terms)

    @property
    def lipschitz_constant(self) -> float:
        """Uniform-in-y Lipschitz constant of v -> alpha(y, v)."""
        return sum(t.g.sup * t.h.sup_derivative for t in self.terms)

    @property
    def max_frequency(self) -> int:
        return max((t.g.max_frequency for t in self.terms), default=0)

    @property
    def is_constant(self) -> bool:
        return len(self.terms) == 0

    @property
    def fingerprint(self) -> str:
        return sha256_hex(canonical_json(self.model_dump(mode='json')))[:16]

    @classmethod
    def constant(cls, alpha0: float, y_dim: int = 1, v_dim: int = 1) -> "CoefficientSpec":
        return cls(alpha0=alpha0, terms=(), y_dim=y_dim, v_dim=v_dim)


def frac(y) -> np.ndarray:
    """Componentwise fractional part on the half-open cell [0, 1)."""
    y = np.asarray(y, dtype=float)
    r = y - np.floor(y)
    # tiny negatives round up to exactly 1.0
    return np.where(r >= 1.0, 0.0, r)


def _trailing(arr, dim: int) -> np.ndarray:
    """Shape (..., dim) view of points / fast values; dim=1 inputs may omit the axis."""
    arr = np.asarray(arr, dtype=float)
    if dim == 1:
        if arr.ndim >= 2 and arr.shape[-1] == 1:
            return arr
        return arr[..., None]
    if arr.ndim == 0 or arr.shape[-1] != dim:
        raise ValueError(f"Expected trailing dimension {dim}, got shape {arr.shape}")
    return arr


def cell_function_values(g: CellFunction, y) -> np.ndarray:
    """g(y) for points y of shape (..., y_dim)."""
    k = np.asarray(g.wave_vector, dtype=float)
    if g.type == 'sin_product':
        return g.amplitude * np.prod(np.sin(2.0 * np.pi * k * y), axis=-1)
    phase = 2.0 * np.pi * (y @ k)
    if g.type == 'sin':
        return g.amplitude * np.sin(phase)
    if g.type == 'cos':
        return g.amplitude * np.cos(phase)
    return g.amplitude * np.sin(phase) ** 2


def fast_response_values(h: FastResponse, v) -> np.ndarray:
    """h(v) for fast values v of shape (..., v_dim)."""
    if h.type == 'rational':
        return 1.0 / (1.0 + np.sum(v * v, axis=-1))
    d = np.zeros(v.shape[-1])
    if h.direction is None:
        d[0] = 1.0
    else:
        d[:] = h.direction
    return np.tanh(v @ d) ** 2


def eval_alpha(spec: CoefficientSpec, y, v) -> np.ndarray:
    """
    alpha(y, v) with y wrapped into Y by periodicity.

    Args:
        spec: coefficient
        y: point(s) of shape (..., y_dim); 1d cells accept bare scalars
        v: fast value(s) of shape (..., v_dim); scalar fast values accept bare scalars

    Returns:
        Broadcast array of coefficient values (0-d for a single point)
    """
    y = frac(_trailing(y, spec.y_dim))
    v = _trailing(v, spec.v_dim)
    shape = np.broadcast_shapes(y.shape[:-1], v.shape[:-1])
    out = np.full(shape, spec.alpha0)
    for term in spec.terms:
        out = out + cell_function_values(term.g, y) * fast_response_values(term.h, v)
    return out


def eval_alpha_eps(spec: CoefficientSpec, eps: float, x, v) -> np.ndarray:
    """alpha^eps(x, v) = alpha(frac(x / eps), v)."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = _trailing(x, spec.y_dim)
    return eval_alpha(spec, x / eps, v)


def default_cells_per_dim(spec: CoefficientSpec) -> int:
    return max(16, 4 * spec.max_frequency)


def cell_means(spec: CoefficientSpec, cells_per_dim: Optional[int] = None) -> np.ndarray:
    """Midpoint-rule cell averages of each g_j over Y."""
    m = default_cells_per_dim(spec) if cells_per_dim is None else int(cells_per_dim)
    if m < 4:
        raise ValueError(f"cells_per_dim must be at least 4, got {cells_per_dim}")
    nodes = (np.arange(m) + 0.5) / m
    if spec.y_dim == 1:
        y = nodes[:, None]
    else:
        gx, gy = np.meshgrid(nodes, nodes, indexing='ij')
        y = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return np.array([float(np.mean(cell_function_values(t.g, y))) for t in spec.terms])


def cell_average(spec: CoefficientSpec, v, cells_per_dim: Optional[int] = None) -> np.ndarray:
    """
    Cell average int_Y alpha(y, v) dy by a midpoint tensor rule.

    Exact for trigonometric cell functions once cells_per_dim exceeds twice the
    largest frequency; the default picks max(16, 4 * max_frequency).
    """
    v = _trailing(v, spec.v_dim)
    means = cell_means(spec, cells_per_dim)
    out = np.full(v.shape[:-1], spec.alpha0)
    for mean, term in zip(means, spec.terms):
        out = out + mean * fast_response_values(term.h, v)
    return out


def check_resolution(eps: float, grid_points_per_dim: int, required: int = MIN_POINTS_PER_CELL):
    """Raise QuadratureResolutionError unless the grid has `required` points per eps-cell."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    per_cell = grid_points_per_dim * eps
    if per_cell < required:
        raise QuadratureResolutionError(eps, per_cell, required)


def oscillating_cell_values(spec: CoefficientSpec, basis: GalerkinBasis, eps: float) -> np.ndarray:
    """
    g_j(frac(x/eps)) on the basis grid, shape (n_terms, n_points).

    A constant coefficient has no cells to resolve and skips the grid guard.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if spec.y_dim != basis.dim:
        raise ValueError(f"Coefficient cell dimension {spec.y_dim} does not match the domain dimension {basis.dim}")
    if not spec.terms:
        return np.zeros((0, basis.n_points))
    check_resolution(eps, basis.grid_points_per_dim)
    y = frac(basis.points / eps)
    return np.stack([cell_function_values(t.g, y) for t in spec.terms])


def fast_values_on_grid(spec: CoefficientSpec, basis: GalerkinBasis, field) -> np.ndarray:
    """Fast field on the basis grid as (n_points, v_dim)."""
    comps = as_components(basis, field)
    if comps.shape[1] != spec.v_dim:
        raise ValueError(f"Fast field has {comps.shape[1]} components, coefficient expects v_dim={spec.v_dim}")
    return comps


def alpha_eps_on_grid(spec: CoefficientSpec, basis: GalerkinBasis, eps: float, fast_field,
                      cell_values: Optional[np.ndarray] = None) -> np.ndarray:
    """alpha(x/eps, v(x)) at every grid point; `cell_values` may be precomputed."""
    if cell_values is None:
        cell_values = oscillating_cell_values(spec, basis, eps)
    v = fast_values_on_grid(spec, basis, fast_field)
    out = np.full(basis.n_points, spec.alpha0)
    for j, term in enumerate(spec.terms):
        out = out + cell_values[j] * fast_response_values(term.h, v)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite coefficient values on the grid")
    return out


def two_scale_test(
    spec: CoefficientSpec,
    basis: GalerkinBasis,
    z_field,
    w_field,
    eps_list: Sequence[float],
    phi_coeffs=None,
    phi_field=None,
) -> list:
    """
    Two-scale oscillation integrals

        I(eps) = int_D (alpha(x/eps, z(x)) - int_Y alpha(y, z(x)) dy) w(x) . phi(x) dx

    over the basis grid. phi is given either by coefficients or as a grid field.
    """
    if (phi_coeffs is None) == (phi_field is None):
        raise ValueError("Provide exactly one of phi_coeffs or phi_field")
    if phi_field is None:
        phi_field = evaluate_on_grid(basis, phi_coeffs)

    w = as_components(basis, w_field)
    phi = as_components(basis, phi_field)
    if w.shape != phi.shape:
        raise ValueError(f"w has shape {w.shape} but phi has shape {phi.shape}")
    weight = basis.weights * np.sum(w * phi, axis=1)

    z = fast_values_on_grid(spec, basis, z_field)
    averaged = cell_average(spec, z)

    results = []
    for eps in eps_list:
        oscillating = alpha_eps_on_grid(spec, basis, eps, z_field)
        results.append(float(np.sum((oscillating - averaged) * weight)))
    return results
