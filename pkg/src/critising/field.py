"""The renormalized magnetization field as a piecewise-constant function.

On a grid of mesh ``a`` the field equals ``Theta_a * sigma_x / a^2`` on the
cell of site ``x``, so integrating it over the unit square gives
``Theta_a * sum(sigma)``.  Coefficients against the sine basis
``e_jk(x, y) = 2 sin(j pi x) sin(k pi y)`` are computed by integrating each
cell exactly, which turns the whole coefficient table into two small matrix
products.

Rows of a grid are the y direction and columns the x direction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np
from scipy.special import gammaln

from .lattice import LatticeSpec, SubSquare


class SchemeKind(enum.Enum):
    WU_EXPONENT = "wu"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class RenormScheme:
    """How the spins are scaled: ``a^(15/8)`` or ``a^2 * rho_hat(a)^(-1/2)``."""

    kind: SchemeKind = SchemeKind.WU_EXPONENT
    rho_hat: float | None = None

    def __post_init__(self):
        if self.kind is SchemeKind.EMPIRICAL:
            if self.rho_hat is None or not self.rho_hat > 0:
                raise ValueError(f"empirical scheme needs rho_hat > 0, got {self.rho_hat!r}")

    @classmethod
    def wu(cls) -> RenormScheme:
        return cls(SchemeKind.WU_EXPONENT)

    @classmethod
    def empirical(cls, rho_hat: float) -> RenormScheme:
        return cls(SchemeKind.EMPIRICAL, float(rho_hat))

    def theta(self, mesh: Fraction | float) -> float:
        a = float(mesh)
        if self.kind is SchemeKind.WU_EXPONENT:
            return a ** (15 / 8)
        return a * a / math.sqrt(self.rho_hat)


@dataclass(frozen=True)
class FieldGrid:
    cell_values: np.ndarray
    mesh: Fraction

    @property
    def n_side(self) -> int:
        return self.cell_values.shape[0]

    def integral(self) -> float:
        a = float(self.mesh)
        return float(self.cell_values.sum()) * a * a

    def restricted(self, sub: SubSquare) -> FieldGrid:
        """Copy of the field with every cell outside ``sub`` set to zero."""
        out = np.zeros_like(self.cell_values)
        sl = (slice(sub.row, sub.row + sub.side), slice(sub.col, sub.col + sub.side))
        out[sl] = self.cell_values[sl]
        return FieldGrid(out, self.mesh)

    def __add__(self, other: FieldGrid) -> FieldGrid:
        if self.mesh != other.mesh:
            raise ValueError("fields live on different grids")
        return FieldGrid(self.cell_values + other.cell_values, self.mesh)

    def __neg__(self) -> FieldGrid:
        return FieldGrid(-self.cell_values, self.mesh)


def _spin_array(spins) -> np.ndarray:
    arr = getattr(spins, "spins", spins)
    return np.asarray(arr)


def field_from_spins(spec: LatticeSpec, spins, scheme: RenormScheme | None = None) -> FieldGrid:
    scheme = scheme or RenormScheme.wu()
    s = _spin_array(spins)
    if s.shape != (spec.n_side, spec.n_side):
        raise ValueError(f"spin grid {s.shape} does not match n_side={spec.n_side}")
    a = float(spec.mesh)
    scale = scheme.theta(spec.mesh) / (a * a)
    return FieldGrid(scale * s.astype(float), spec.mesh)


def magnetization(spec: LatticeSpec, spins, scheme: RenormScheme | None = None) -> float:
    scheme = scheme or RenormScheme.wu()
    s = _spin_array(spins)
    return scheme.theta(spec.mesh) * int(s.sum(dtype=np.int64))


def _cell_integrals(n: int, j_max: int, scale: float) -> np.ndarray:
    """``out[j-1, c] = scale * (cos(j pi c/n) - cos(j pi (c+1)/n)) / (j pi)``."""
    j = np.arange(1, j_max + 1, dtype=float)[:, None]
    edges = np.arange(n + 1, dtype=float)[None, :] / n
    # cos a - cos b = 2 sin((a+b)/2) sin((b-a)/2) avoids cancellation at large j
    mid = 0.5 * (edges[:, :-1] + edges[:, 1:])
    half = 0.5 / n
    diff = 2.0 * np.sin(j * np.pi * mid) * np.sin(j * np.pi * half)
    return scale * diff / (j * np.pi)


@dataclass(frozen=True)
class SobolevCoeffs:
    """``a[j-1, k-1]`` is the coefficient of ``e_jk`` (``j`` along x, ``k`` along y)."""

    a: np.ndarray

    @property
    def j_max(self) -> int:
        return self.a.shape[0]


def default_j_max(n_side: int) -> int:
    return max(64, 2 * n_side)


def sobolev_coefficients(field: FieldGrid, j_max: int | None = None) -> SobolevCoeffs:
    n = field.n_side
    j_max = default_j_max(n) if j_max is None else int(j_max)
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    ix = _cell_integrals(n, j_max, 2.0)
    iy = _cell_integrals(n, j_max, 1.0)
    # a[j, k] = sum_{r,c} v[r, c] ix[j, c] iy[k, r]
    return SobolevCoeffs(ix @ field.cell_values.T @ iy.T)


def fourier_coefficient(field: FieldGrid, j: int, k: int) -> float:
    if j < 1 or k < 1:
        raise ValueError(f"sine indices must be >= 1, got ({j}, {k})")
    n = field.n_side
    ix = _cell_integrals(n, j, 2.0)[j - 1]
    iy = _cell_integrals(n, k, 1.0)[k - 1]
    return float(iy @ field.cell_values @ ix)


def _weights(j_max: int, alpha: float) -> np.ndarray:
    j = np.arange(1, j_max + 1, dtype=float)
    return (j[:, None] ** 2 + j[None, :] ** 2) ** (-alpha)


def weight_tail(j_max: int, alpha: float) -> float:
    """Upper bound on ``sum (j^2+k^2)^(-alpha)`` over pairs with ``max(j, k) > j_max``."""
    if alpha <= 1.0:
        return math.inf
    # sum_k (j^2+k^2)^-alpha <= j^(1-2 alpha) sqrt(pi) Gamma(alpha-1/2) / (2 Gamma(alpha))
    line = math.exp(0.5 * math.log(math.pi) + gammaln(alpha - 0.5) - gammaln(alpha)) / 2.0
    return 2.0 * line * j_max ** (2.0 - 2.0 * alpha) / (2.0 * alpha - 2.0)


@dataclass(frozen=True)
class SobolevNorm:
    value: float
    tail_bound: float
    j_max: int
    alpha: float


def sobolev_norm_sq(coeffs: SobolevCoeffs | np.ndarray, alpha: float) -> SobolevNorm:
    """Truncated ``sum a_jk^2 / (j^2+k^2)^alpha`` with a tail estimate.

    The tail estimate assumes coefficients beyond ``j_max`` stay below the
    largest one in the outer half shell ``max(j, k) > j_max / 2``.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    a = coeffs.a if isinstance(coeffs, SobolevCoeffs) else np.asarray(coeffs, dtype=float)
    j_max = a.shape[0]
    value = float(np.sum(a * a * _weights(j_max, alpha)))
    idx = np.arange(1, j_max + 1)
    shell = np.maximum(idx[:, None], idx[None, :]) > j_max // 2
    amax2 = float(np.max(a[shell] ** 2)) if shell.any() else 0.0
    return SobolevNorm(value, amax2 * weight_tail(j_max, alpha), j_max, float(alpha))


def field_norm_sq(field: FieldGrid, alpha: float = 2.0, j_max: int | None = None) -> float:
    return sobolev_norm_sq(sobolev_coefficients(field, j_max), alpha).value


@dataclass(frozen=True)
class RestrictedNorm:
    ratio: float
    stderr: float
    mean_norm_sq: float
    area: float
    n_samples: int
    flagged: bool


def restricted_norm_scaling(samples: Iterable[FieldGrid], sub: SubSquare, alpha: float = 2.0,
                            j_max: int = 64, min_samples: int = 1000) -> RestrictedNorm:
    """``E ||Phi 1_sub||^2_{H^-alpha} / area(sub)^(15/8)`` with a batch-means error bar."""
    from .estimators import batch_means

    norms = []
    n_side = None
    for f in samples:
        n_side = f.n_side
        if sub.row < 0 or sub.col < 0 or sub.row + sub.side > n_side or sub.col + sub.side > n_side:
            raise ValueError(f"{sub} is not inside the {n_side}-grid")
        norms.append(field_norm_sq(f.restricted(sub), alpha, j_max))
    if not norms:
        raise ValueError("no field samples")
    arr = np.asarray(norms)
    area = float(sub.area(n_side))
    scale = area ** (15 / 8)
    n_batches = 32 if arr.size >= 64 else max(2, arr.size // 2)
    if arr.size >= 4:
        mean, se = batch_means(arr, n_batches)
    else:
        mean, se = float(arr.mean()), float("inf")
    return RestrictedNorm(mean / scale, se / scale, mean, area, arr.size, arr.size < min_samples)
