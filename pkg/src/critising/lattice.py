"""Finite square grids mapped onto the unit square.

Sites are indexed row-major, ``i = row * n_side + col``.  The site ``(row, col)``
sits at ``((col + 1/2) / N, (row + 1/2) / N)`` and owns the cell of side
``a = 1/N`` centred there, so the cells tile ``[0, 1]^2``.

Under wired boundary conditions (plus or minus) every boundary site is joined
to a single extra vertex, the *ghost*, by one edge per missing in-grid
neighbour.  The ghost carries index ``n_side**2`` and spin ``+1`` (plus) or
``-1`` (minus).

Edges are kept in one canonical order that the sampler, the cluster code and
the oracle all share: interior edges first, scanning sites row-major and
emitting the ``+col`` edge before the ``+row`` edge, then ghost edges side by
side (row 0, row N-1, col 0, col N-1).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np


class BoundaryCondition(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    FREE = "free"

    @property
    def wired(self) -> bool:
        return self is not BoundaryCondition.FREE

    @property
    def ghost_spin(self) -> int:
        """Spin of the ghost vertex; 0 when there is none."""
        if self is BoundaryCondition.PLUS:
            return 1
        if self is BoundaryCondition.MINUS:
            return -1
        return 0

    @classmethod
    def parse(cls, value: str | BoundaryCondition) -> BoundaryCondition:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown boundary condition {value!r}") from None


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Site:
    row: int
    col: int
    n_side: int

    @property
    def center(self) -> tuple[Fraction, Fraction]:
        return (Fraction(2 * self.col + 1, 2 * self.n_side),
                Fraction(2 * self.row + 1, 2 * self.n_side))

    @property
    def index(self) -> int:
        return self.row * self.n_side + self.col


@dataclass(frozen=True)
class SubSquare:
    """Axis-aligned block of ``side x side`` cells with lower corner cell ``(row, col)``."""

    row: int
    col: int
    side: int

    def region(self, n_side: int) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        """Real region ``(x0, y0, x1, y1)`` inside the unit square."""
        return (Fraction(self.col, n_side), Fraction(self.row, n_side),
                Fraction(self.col + self.side, n_side), Fraction(self.row + self.side, n_side))

    def area(self, n_side: int) -> Fraction:
        return Fraction(self.side, n_side) ** 2

    def contains(self, row: int, col: int) -> bool:
        return self.row <= row < self.row + self.side and self.col <= col < self.col + self.side

    def site_indices(self, n_side: int) -> np.ndarray:
        rows = np.arange(self.row, self.row + self.side)
        cols = np.arange(self.col, self.col + self.side)
        return (rows[:, None] * n_side + cols[None, :]).ravel()


@dataclass(frozen=True)
class LatticeSpec:
    n_side: int
    boundary: BoundaryCondition

    def __post_init__(self):
        if self.n_side < 2:
            raise ValueError(f"n_side must be >= 2, got {self.n_side}")
        object.__setattr__(self, "boundary", BoundaryCondition.parse(self.boundary))

    @property
    def mesh(self) -> Fraction:
        return Fraction(1, self.n_side)

    @property
    def n_sites(self) -> int:
        return self.n_side * self.n_side

    @property
    def ghost(self) -> int | None:
        return self.n_sites if self.boundary.wired else None

    @property
    def n_vertices(self) -> int:
        return self.n_sites + (1 if self.boundary.wired else 0)

    @property
    def n_interior_edges(self) -> int:
        return 2 * self.n_side * (self.n_side - 1)

    @property
    def n_ghost_edges(self) -> int:
        return 4 * self.n_side if self.boundary.wired else 0

    @property
    def n_edges(self) -> int:
        return self.n_interior_edges + self.n_ghost_edges

    def index(self, row: int, col: int) -> int:
        if not (0 <= row < self.n_side and 0 <= col < self.n_side):
            raise ValueError(f"site ({row}, {col}) outside a {self.n_side}-grid")
        return row * self.n_side + col

    def site(self, i: int) -> Site:
        row, col = divmod(int(i), self.n_side)
        return Site(row, col, self.n_side)

    def neighbors(self, i: int) -> list[int]:
        """In-grid nearest neighbours of site ``i``."""
        n = self.n_side
        row, col = divmod(int(i), n)
        out = []
        if row > 0:
            out.append(i - n)
        if row < n - 1:
            out.append(i + n)
        if col > 0:
            out.append(i - 1)
        if col < n - 1:
            out.append(i + 1)
        return out

    def ghost_degree(self, i: int) -> int:
        """Number of ghost edges at site ``i`` (0 under free boundary)."""
        if not self.boundary.wired:
            return 0
        return 4 - len(self.neighbors(i))

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint arrays ``(u, v)`` in canonical edge order."""
        return _edge_arrays(self.n_side, self.boundary.wired)

    def boundary_sites(self) -> np.ndarray:
        n = self.n_side
        mask = np.zeros((n, n), dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return np.flatnonzero(mask.ravel())


@lru_cache(maxsize=32)
def _edge_arrays(n: int, wired: bool) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n * n).reshape(n, n)
    # interleave +col and +row edges per site, row-major
    u_list, v_list = [], []
    for r in range(n):
        for c in range(n):
            i = idx[r, c]
            if c < n - 1:
                u_list.append(i)
                v_list.append(i + 1)
            if r < n - 1:
                u_list.append(i)
                v_list.append(i + n)
    if wired:
        ghost = n * n
        ghost_sites = np.concatenate([idx[0, :], idx[n - 1, :], idx[:, 0], idx[:, n - 1]])
        u_list.extend(ghost_sites.tolist())
        v_list.extend([ghost] * len(ghost_sites))
    u, v = np.asarray(u_list, dtype=np.int64), np.asarray(v_list, dtype=np.int64)
    # shared between specs through the cache, so keep them immutable
    u.setflags(write=False)
    v.setflags(write=False)
    return u, v


def build_lattice(n_side: int, boundary: BoundaryCondition | str) -> LatticeSpec:
    if not isinstance(n_side, (int, np.integer)) or n_side < 2:
        raise ValueError(f"n_side must be an integer >= 2, got {n_side!r}")
    return LatticeSpec(int(n_side), BoundaryCondition.parse(boundary))


@dataclass(frozen=True)
class AnnulusTarget:
    """Discrete boundary of ``3Q`` after clipping to the grid.

    ``sites`` are the flat indices of in-grid target sites.  ``domain_boundary``
    is set when ``3Q`` overflowed the grid on at least one side; in that case
    the overflowing sides are replaced by the ghost (wired) or by the matching
    grid edge (free).
    """

    sites: np.ndarray
    domain_boundary: bool
    ghost: bool


def annulus_target(spec: LatticeSpec, q: SubSquare) -> AnnulusTarget:
    n = spec.n_side
    if q.side < 1:
        raise ValueError("empty sub-square")
    if q.row < 0 or q.col < 0 or q.row + q.side > n or q.col + q.side > n:
        raise ValueError(f"{q} is not contained in the {n}-grid")
    s = q.side
    lo_r, hi_r = q.row - s, q.row + 2 * s - 1
    lo_c, hi_c = q.col - s, q.col + 2 * s - 1
    r0, r1 = max(lo_r, 0), min(hi_r, n - 1)
    c0, c1 = max(lo_c, 0), min(hi_c, n - 1)
    wired = spec.boundary.wired
    overflow = (lo_r < 0, hi_r > n - 1, lo_c < 0, hi_c > n - 1)

    mask = np.zeros((n, n), dtype=bool)
    # each side is kept if in the grid, else swapped for the grid edge (free only)
    for row, out in ((lo_r, overflow[0]), (hi_r, overflow[1])):
        if not out:
            mask[row, c0:c1 + 1] = True
        elif not wired:
            mask[0 if row < 0 else n - 1, c0:c1 + 1] = True
    for col, out in ((lo_c, overflow[2]), (hi_c, overflow[3])):
        if not out:
            mask[r0:r1 + 1, col] = True
        elif not wired:
            mask[r0:r1 + 1, 0 if col < 0 else n - 1] = True
    clipped = any(overflow)
    return AnnulusTarget(np.flatnonzero(mask.ravel()), clipped, clipped and wired)


def dyadic_blocks(spec: LatticeSpec, rho_inv: int) -> list[SubSquare]:
    """Tile the grid with ``rho_inv**2`` blocks, row-major."""
    n = spec.n_side
    if rho_inv < 1 or n % rho_inv != 0:
        raise ValueError(f"rho_inv={rho_inv} does not divide n_side={n}")
    side = n // rho_inv
    return [SubSquare(br * side, bc * side, side)
            for br in range(rho_inv) for bc in range(rho_inv)]
