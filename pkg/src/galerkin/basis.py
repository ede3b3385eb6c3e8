"""
Orthonormal Galerkin bases on D = (0,1)^d.

Three kinds are supported:
    - scalar_sine_1d:      e_k(x) = sqrt(2) sin(k pi x), Dirichlet on both ends
    - scalar_sine_2d:      e_(m,n)(x, y) = 2 sin(m pi x) sin(n pi y)
    - divfree_fourier_2d:  sqrt(2) (k_perp/|k|) cos(2 pi k.x) and the matching sine
                           field; periodic and pointwise divergence-free

Each basis carries its tensor quadrature grid (uniform, trapezoid weights) and
precomputed tables of mode values and gradients on that grid. Arrays are
frozen after construction so one basis can be shared by many workers.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import product
from typing import Optional, Tuple

import numpy as np

from src.utils.io import sha256_hex


class BasisKind(str, Enum):
    SCALAR_SINE_1D = "scalar_sine_1d"
    SCALAR_SINE_2D = "scalar_sine_2d"
    DIVFREE_FOURIER_2D = "divfree_fourier_2d"


# Phase tags for Fourier modes; sine bases only use PHASE_COS as a placeholder.
PHASE_COS = 0
PHASE_SIN = 1


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GalerkinBasis:
    """Finite-dimensional space V_n with its quadrature grid and evaluation tables."""

    kind: BasisKind
    n_per_dim: int
    grid_points_per_dim: int
    mode_indices: np.ndarray      # (n_modes, dim) integer wave-vectors
    mode_phase: np.ndarray        # (n_modes,) PHASE_COS / PHASE_SIN
    stiffness_diag: np.ndarray    # (n_modes,) lambda_k
    points: np.ndarray            # (n_points, dim)
    weights: np.ndarray           # (n_points,)
    eval_table: np.ndarray        # (n_modes, n_points, n_components)
    grad_table: np.ndarray        # (n_modes, n_points, n_components, dim)

    @property
    def n_modes(self) -> int:
        return int(self.mode_indices.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def n_components(self) -> int:
        return int(self.eval_table.shape[2])

    @property
    def n_points(self) -> int:
        return int(self.points.shape[0])

    @property
    def periodic(self) -> bool:
        return self.kind == BasisKind.DIVFREE_FOURIER_2D

    @property
    def field_shape(self) -> Tuple[int, ...]:
        if self.n_components == 1:
            return (self.n_points,)
        return (self.n_points, self.n_components)

    @property
    def fingerprint(self) -> str:
        return sha256_hex(f"{self.kind.value}:{self.n_per_dim}:{self.grid_points_per_dim}")[:16]

    def mode_values(self, x) -> np.ndarray:
        """Values of every mode at arbitrary points x of shape (..., dim); returns (n_modes, ..., n_components)."""
        values, _ = _mode_tables(self.kind, self.mode_indices, self.mode_phase, np.asarray(x, dtype=float))
        return values

    def boundary_mask(self) -> np.ndarray:
        """Grid points lying on the boundary of D (empty for periodic grids)."""
        if self.periodic:
            return np.zeros(self.n_points, dtype=bool)
        return np.any((self.points <= 0.0) | (self.points >= 1.0), axis=1)

    def __repr__(self) -> str:
        return (
            f"GalerkinBasis(kind={self.kind.value}, n_per_dim={self.n_per_dim}, "
            f"grid_points_per_dim={self.grid_points_per_dim}, n_modes={self.n_modes})"
        )


def _mode_tables(kind: BasisKind, indices: np.ndarray, phase: np.ndarray, x: np.ndarray):
    """Mode values (n_modes, ..., c) and gradients (n_modes, ..., c, dim) at points x (..., dim)."""
    kind = BasisKind(kind)
    lead = x.shape[:-1]

    if kind == BasisKind.SCALAR_SINE_1D:
        k = indices[:, 0].astype(float).reshape((-1,) + (1,) * len(lead))
        arg = np.pi * k * x[..., 0][None]
        values = np.sqrt(2.0) * np.sin(arg)
        grads = np.sqrt(2.0) * np.pi * k * np.cos(arg)
        return values[..., None], grads[..., None, None]

    if kind == BasisKind.SCALAR_SINE_2D:
        shape = (-1,) + (1,) * len(lead)
        m = indices[:, 0].astype(float).reshape(shape)
        n = indices[:, 1].astype(float).reshape(shape)
        ax, ay = np.pi * m * x[..., 0][None], np.pi * n * x[..., 1][None]
        sx, sy, cx, cy = np.sin(ax), np.sin(ay), np.cos(ax), np.cos(ay)
        values = 2.0 * sx * sy
        grads = np.stack([2.0 * np.pi * m * cx * sy, 2.0 * np.pi * n * sx * cy], axis=-1)
        return values[..., None], grads[..., None, :]

    # divergence-free Fourier: direction k_perp / |k| times cos or sin of 2 pi k.x
    kvec = indices.astype(float)
    norms = np.linalg.norm(kvec, axis=1)
    direction = np.stack([-kvec[:, 1], kvec[:, 0]], axis=1) / norms[:, None]
    theta = 2.0 * np.pi * np.tensordot(kvec, x, axes=([1], [x.ndim - 1]))
    is_sin = (phase == PHASE_SIN).reshape((-1,) + (1,) * len(lead))
    wave = np.where(is_sin, np.sin(theta), np.cos(theta))
    dwave = np.where(is_sin, np.cos(theta), -np.sin(theta))
    bshape = (-1,) + (1,) * len(lead) + (2,)
    dirs = direction.reshape(bshape)
    values = np.sqrt(2.0) * wave[..., None] * dirs
    kfac = (2.0 * np.pi * kvec).reshape((-1,) + (1,) * len(lead) + (1, 2))
    grads = np.sqrt(2.0) * dwave[..., None, None] * dirs[..., :, None] * kfac
    return values, grads


def _mode_list(kind: BasisKind, n_per_dim: int):
    """Wave-vectors and phases ordered by (|k|^2, lexicographic k) so truncation is nested."""
    if kind == BasisKind.SCALAR_SINE_1D:
        ks = [(k,) for k in range(1, n_per_dim + 1)]
        phases = [PHASE_COS] * len(ks)
    elif kind == BasisKind.SCALAR_SINE_2D:
        ks = sorted(product(range(1, n_per_dim + 1), repeat=2), key=lambda k: (k[0] ** 2 + k[1] ** 2, k))
        phases = [PHASE_COS] * len(ks)
    else:
        # one representative per +-k pair: k1 > 0, or k1 == 0 and k2 > 0
        reps = [
            k for k in product(range(-n_per_dim, n_per_dim + 1), repeat=2)
            if k[0] > 0 or (k[0] == 0 and k[1] > 0)
        ]
        reps.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k))
        ks, phases = [], []
        for k in reps:
            ks.extend([k, k])
            phases.extend([PHASE_COS, PHASE_SIN])
    return np.array(ks, dtype=int), np.array(phases, dtype=int)


def _grid(kind: BasisKind, cells: int):
    if kind == BasisKind.DIVFREE_FOURIER_2D:
        nodes = np.arange(cells) / cells
        w1 = np.full(cells, 1.0 / cells)
    else:
        nodes = np.linspace(0.0, 1.0, cells + 1)
        w1 = np.full(cells + 1, 1.0 / cells)
        w1[0] *= 0.5
        w1[-1] *= 0.5

    if kind == BasisKind.SCALAR_SINE_1D:
        return nodes[:, None], w1
    gx, gy = np.meshgrid(nodes, nodes, indexing='ij')
    points = np.stack([gx.ravel(), gy.ravel()], axis=1)
    weights = np.outer(w1, w1).ravel()
    return points, weights


def grid_floor(kind: BasisKind, n_per_dim: int) -> int:
    """Smallest admissible grid_points_per_dim for exact mass/stiffness assembly."""
    kind = BasisKind(kind)
    if kind == BasisKind.DIVFREE_FOURIER_2D:
        return 2 * n_per_dim + 1
    return 2 * n_per_dim


@lru_cache(maxsize=16)
def build_basis(kind, n_per_dim: int, grid_points_per_dim: int) -> GalerkinBasis:
    """
    Construct an orthonormal Galerkin basis with its quadrature grid.

    Args:
        kind: BasisKind or its string value
        n_per_dim: modes per axis (wave numbers 1..n for sine, |k|_inf <= n for Fourier)
        grid_points_per_dim: uniform cells per axis of the quadrature grid

    Returns:
        Immutable GalerkinBasis
    """
    try:
        kind = BasisKind(kind)
    except ValueError:
        raise ValueError(f"Unknown basis kind: {kind!r}. Choose one of {[k.value for k in BasisKind]}")
    if int(n_per_dim) != n_per_dim or n_per_dim < 1:
        raise ValueError(f"n_per_dim must be a positive integer, got {n_per_dim}")
    floor = grid_floor(kind, n_per_dim)
    if grid_points_per_dim < floor:
        raise ValueError(
            f"grid_points_per_dim={grid_points_per_dim} is below the anti-aliasing floor {floor} "
            f"for {kind.value} with n_per_dim={n_per_dim}"
        )

    indices, phases = _mode_list(kind, int(n_per_dim))
    points, weights = _grid(kind, int(grid_points_per_dim))
    values, grads = _mode_tables(kind, indices, phases, points)

    k2 = np.sum(indices.astype(float) ** 2, axis=1)
    factor = 4.0 * np.pi ** 2 if kind == BasisKind.DIVFREE_FOURIER_2D else np.pi ** 2
    stiffness = factor * k2

    return GalerkinBasis(
        kind=kind,
        n_per_dim=int(n_per_dim),
        grid_points_per_dim=int(grid_points_per_dim),
        mode_indices=_freeze(indices),
        mode_phase=_freeze(phases),
        stiffness_diag=_freeze(stiffness),
        points=_freeze(points),
        weights=_freeze(weights),
        eval_table=_freeze(values),
        grad_table=_freeze(grads),
    )


def as_components(basis: GalerkinBasis, field) -> np.ndarray:
    """View a grid field as (n_points, n_components); raises on shape mismatch."""
    arr = np.asarray(field, dtype=float)
    if arr.shape == basis.field_shape:
        return arr.reshape(basis.n_points, basis.n_components)
    if arr.shape == (basis.n_points, basis.n_components):
        return arr
    raise ValueError(f"Field shape {arr.shape} does not match the grid shape {basis.field_shape}")


def project(basis: GalerkinBasis, field) -> np.ndarray:
    """Coefficients c_k = <field, e_k> under the basis quadrature."""
    comps = as_components(basis, field)
    return np.einsum('kpc,p,pc->k', basis.eval_table, basis.weights, comps)


def evaluate_on_grid(basis: GalerkinBasis, coeffs) -> np.ndarray:
    """Grid samples of sum_k c_k e_k."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (basis.n_modes,):
        raise ValueError(f"Coefficient vector has shape {c.shape}, expected ({basis.n_modes},)")
    field = np.tensordot(c, basis.eval_table, axes=(0, 0))
    return field.reshape(basis.field_shape)


def v_norm(basis: GalerkinBasis, coeffs) -> float:
    """Discrete H^1_0 seminorm (sum lambda_k c_k^2)^(1/2)."""
    c = np.asarray(coeffs, dtype=float)
    return float(np.sqrt(np.sum(basis.stiffness_diag * c * c)))


def h_norm(coeffs) -> float:
    """L2 norm of the represented field; the basis is orthonormal."""
    return float(np.linalg.norm(np.asarray(coeffs, dtype=float)))


def grid_norm(basis: GalerkinBasis, field) -> float:
    comps = as_components(basis, field)
    return float(np.sqrt(np.sum(basis.weights[:, None] * comps * comps)))


def unit_vector(basis: GalerkinBasis, slot: int = 0) -> np.ndarray:
    """Coefficients of a single mode (0-based slot)."""
    if not 0 <= slot < basis.n_modes:
        raise ValueError(f"Mode slot {slot} out of range for {basis.n_modes} modes")
    c = np.zeros(basis.n_modes)
    c[slot] = 1.0
    return c


def mass_matrix(basis: GalerkinBasis) -> np.ndarray:
    table = basis.eval_table.reshape(basis.n_modes, -1)
    weighted = (basis.eval_table * basis.weights[None, :, None]).reshape(basis.n_modes, -1)
    return weighted @ table.T


def stiffness_matrix(basis: GalerkinBasis) -> np.ndarray:
    table = basis.grad_table.reshape(basis.n_modes, basis.n_points, -1)
    weighted = table * basis.weights[None, :, None]
    return weighted.reshape(basis.n_modes, -1) @ table.reshape(basis.n_modes, -1).T


def weighted_mass_matrix(basis: GalerkinBasis, weight_field) -> np.ndarray:
    """Symmetric matrix int_D w(x) e_i . e_j dx for a scalar weight sampled on the grid."""
    w = np.asarray(weight_field, dtype=float)
    if w.shape != (basis.n_points,):
        raise ValueError(f"Weight field has shape {w.shape}, expected ({basis.n_points},)")
    table = basis.eval_table.reshape(basis.n_modes, -1)
    scaled = (basis.eval_table * (basis.weights * w)[None, :, None]).reshape(basis.n_modes, -1)
    matrix = scaled @ table.T
    return 0.5 * (matrix + matrix.T)


def spectral_divergence(basis: GalerkinBasis, field) -> np.ndarray:
    """
    FFT divergence of a periodic vector field sampled on the basis grid.

    Exact for trigonometric fields resolved by the grid, so it is an independent
    check of the divergence-free construction.
    """
    if not basis.periodic or basis.n_components != 2:
        raise ValueError("spectral_divergence needs the periodic divergence-free basis")
    m = basis.grid_points_per_dim
    comps = as_components(basis, field)
    ux = comps[:, 0].reshape(m, m)
    uy = comps[:, 1].reshape(m, m)
    k = 2.0 * np.pi * np.fft.fftfreq(m, d=1.0 / m)
    kx, ky = np.meshgrid(k, k, indexing='ij')
    div_hat = 1j * kx * np.fft.fft2(ux) + 1j * ky * np.fft.fft2(uy)
    return np.real(np.fft.ifft2(div_hat)).ravel()


def analytic_divergence(basis: GalerkinBasis, coeffs) -> np.ndarray:
    """Divergence on the grid from the gradient tables (trace of the Jacobian)."""
    if basis.n_components != basis.dim:
        raise ValueError("Divergence is only defined for vector bases")
    c = np.asarray(coeffs, dtype=float)
    trace = np.einsum('kpii->kp', basis.grad_table)
    return np.tensordot(c, trace, axes=(0, 0))


def check_orthonormality(basis: GalerkinBasis) -> Tuple[float, float]:
    """Max deviations |M - I| and |K - diag(lambda)| / max(lambda)."""
    mass_dev = float(np.max(np.abs(mass_matrix(basis) - np.eye(basis.n_modes))))
    lam_max = float(np.max(basis.stiffness_diag))
    stiff_dev = float(np.max(np.abs(stiffness_matrix(basis) - np.diag(basis.stiffness_diag)))) / lam_max
    return mass_dev, stiff_dev


def find_mode(basis: GalerkinBasis, wave_vector, phase: Optional[int] = None) -> int:
    """Slot of the mode with the given wave-vector (and phase for Fourier bases)."""
    target = np.asarray(wave_vector, dtype=int)
    for slot, k in enumerate(basis.mode_indices):
        if np.array_equal(k, target) and (phase is None or basis.mode_phase[slot] == phase):
            return slot
    raise ValueError(f"No mode with wave-vector {tuple(target)} in {basis!r}")
