"""Connectivity of FK configurations.

Union-find (path compression, union by rank) over the open edges gives the
cluster of every vertex.  On top of that sit the one-arm event, the block
variables ``X_i, Y_i`` and the cluster-cutoff magnetization, all of which ask
whether a site's cluster reaches the boundary ring of ``3Q`` for its block
``Q``.  The ring is clipped to the grid as described in
:func:`critising.lattice.annulus_target`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Iterable

import numpy as np
from numba import njit

from .lattice import LatticeSpec, Site

if TYPE_CHECKING:
    from .field import RenormScheme
    from .sampler import BondConfig, ColoredBonds


@njit(cache=True, inline="always")
def find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True, inline="always")
def union(parent, rank, a, b):
    ra = find(parent, a)
    rb = find(parent, b)
    if ra == rb:
        return
    if rank[ra] < rank[rb]:
        parent[ra] = rb
    elif rank[ra] > rank[rb]:
        parent[rb] = ra
    else:
        parent[rb] = ra
        rank[ra] += 1


@njit(cache=True)
def compress_all(parent):
    for i in range(parent.shape[0]):
        find(parent, i)
    return parent


@njit(cache=True)
def _label_kernel(n_vertices, eu, ev, is_open):
    parent = np.arange(n_vertices)
    rank = np.zeros(n_vertices, np.int8)
    for e in range(eu.shape[0]):
        if is_open[e]:
            union(parent, rank, eu[e], ev[e])
    return compress_all(parent), rank


@dataclass(frozen=True)
class ClusterLabels:
    """Cluster membership of every vertex (sites plus ghost, if any).

    ``roots[v]`` is the representative of ``v``'s cluster; after full path
    compression ``roots`` equals the union-find parent array.
    """

    spec: LatticeSpec
    roots: np.ndarray
    rank: np.ndarray | None = None

    @cached_property
    def sizes(self) -> np.ndarray:
        """Number of grid sites in the cluster rooted at each vertex (0 for non-roots)."""
        return np.bincount(self.roots[: self.spec.n_sites], minlength=self.spec.n_vertices)

    @cached_property
    def ghost_root(self) -> int:
        g = self.spec.ghost
        return -1 if g is None else int(self.roots[g])

    @cached_property
    def touches_boundary(self) -> np.ndarray:
        """Per root: the cluster holds a boundary site or the ghost."""
        flag = np.zeros(self.spec.n_vertices, dtype=bool)
        flag[self.roots[self.spec.boundary_sites()]] = True
        if self.ghost_root >= 0:
            flag[self.ghost_root] = True
        return flag

    @cached_property
    def touches_ghost(self) -> np.ndarray:
        flag = np.zeros(self.spec.n_vertices, dtype=bool)
        if self.ghost_root >= 0:
            flag[self.ghost_root] = True
        return flag

    @property
    def n_clusters(self) -> int:
        """Clusters containing at least one grid site."""
        return int(np.count_nonzero(self.sizes))

    def connected(self, u: int, v: int) -> bool:
        return bool(self.roots[u] == self.roots[v])

    def partition(self) -> set[frozenset[int]]:
        groups: dict[int, list[int]] = {}
        for v, r in enumerate(self.roots.tolist()):
            groups.setdefault(r, []).append(v)
        return {frozenset(g) for g in groups.values()}


def label_clusters(spec: LatticeSpec, bond: BondConfig) -> ClusterLabels:
    eu, ev = spec.edges
    roots, rank = _label_kernel(spec.n_vertices, eu, ev, bond.open)
    return ClusterLabels(spec, roots, rank)


def one_arm_event(labels: ClusterLabels, site: Site | int) -> bool:
    """True iff the site's cluster reaches the domain boundary (or the ghost)."""
    i = site.index if isinstance(site, Site) else int(site)
    return bool(labels.touches_boundary[labels.roots[i]])


def box_reaches_boundary(labels: ClusterLabels, row0: int, col0: int, side: int) -> bool:
    """Does any site of the ``side``-box at ``(row0, col0)`` connect to the domain boundary?"""
    n = labels.spec.n_side
    rows = np.arange(row0, row0 + side)
    cols = np.arange(col0, col0 + side)
    idx = (rows[:, None] * n + cols[None, :]).ravel()
    return bool(labels.touches_boundary[labels.roots[idx]].any())


@njit(cache=True)
def _crossing_mask_kernel(roots, n, side, ghost_root, wired):
    stamp = np.full(roots.shape[0], -1, np.int64)
    mask = np.zeros(n * n, np.bool_)
    nb = n // side
    qid = 0
    for br in range(nb):
        for bc in range(nb):
            r0 = br * side
            c0 = bc * side
            lo_r = r0 - side
            hi_r = r0 + 2 * side - 1
            lo_c = c0 - side
            hi_c = c0 + 2 * side - 1
            rr0 = max(lo_r, 0)
            rr1 = min(hi_r, n - 1)
            cc0 = max(lo_c, 0)
            cc1 = min(hi_c, n - 1)
            clipped = lo_r < 0 or hi_r > n - 1 or lo_c < 0 or hi_c > n - 1
            # rows of the ring
            for k in range(2):
                row = lo_r if k == 0 else hi_r
                if 0 <= row <= n - 1:
                    use = row
                elif not wired:
                    use = 0 if row < 0 else n - 1
                else:
                    use = -1
                if use >= 0:
                    for c in range(cc0, cc1 + 1):
                        stamp[roots[use * n + c]] = qid
            for k in range(2):
                col = lo_c if k == 0 else hi_c
                if 0 <= col <= n - 1:
                    use = col
                elif not wired:
                    use = 0 if col < 0 else n - 1
                else:
                    use = -1
                if use >= 0:
                    for r in range(rr0, rr1 + 1):
                        stamp[roots[r * n + use]] = qid
            if clipped and wired:
                stamp[ghost_root] = qid
            for r in range(r0, r0 + side):
                for c in range(c0, c0 + side):
                    i = r * n + c
                    mask[i] = stamp[roots[i]] == qid
            qid += 1
    return mask


def crossing_mask(labels: ClusterLabels, rho_inv: int) -> np.ndarray:
    """Boolean ``(N, N)`` grid: site ``x`` is connected to the ring of ``3Q(x)``.

    ``Q(x)`` is the block of side ``N / rho_inv`` containing ``x``.
    """
    spec = labels.spec
    n = spec.n_side
    if rho_inv < 1 or n % rho_inv != 0:
        raise ValueError(f"rho_inv={rho_inv} does not divide n_side={n}")
    mask = _crossing_mask_kernel(labels.roots, n, n // rho_inv, labels.ghost_root,
                                 spec.boundary.wired)
    return mask.reshape(n, n)


def _theta(spec: LatticeSpec, scheme: RenormScheme | None) -> float:
    if scheme is None:
        from .field import RenormScheme
        scheme = RenormScheme.wu()
    return scheme.theta(spec.mesh)


def cutoff_decomposition(spec: LatticeSpec, colored: ColoredBonds, rho_inv: int,
                         scheme: RenormScheme | None = None) -> tuple[float, float]:
    """Split the magnetization into (crossing part, remainder).

    The two parts add up to ``Theta_a * sum(sigma)`` up to floating rounding.
    """
    theta = _theta(spec, scheme)
    mask = crossing_mask(colored.labels, rho_inv)
    spins = colored.spin_grid()
    crossing = int(spins[mask].sum())
    rest = int(spins[~mask].sum())
    return theta * crossing, theta * rest


def cutoff_magnetization(spec: LatticeSpec, colored: ColoredBonds, rho_inv: int,
                         scheme: RenormScheme | None = None) -> float:
    return cutoff_decomposition(spec, colored, rho_inv, scheme)[0]


@dataclass(frozen=True)
class BlockStats:
    """Block variables for one configuration.

    ``x[q, i]`` and ``y[q, i]`` refer to the ``i``-th epsilon-block (row-major)
    inside the ``q``-th rho-block (row-major).
    """

    x: np.ndarray
    y: np.ndarray
    rho_inv: int
    eps_inv: int

    @property
    def sum_x(self) -> np.ndarray:
        return self.x.sum(axis=1)

    @property
    def sum_y(self) -> np.ndarray:
        return self.y.sum(axis=1)


def _block_view(grid: np.ndarray, rho_inv: int, eps_inv: int) -> np.ndarray:
    """Reshape an ``(N, N)`` grid to ``(nQ, nB, b, b)``."""
    n = grid.shape[0]
    b = n // eps_inv
    k = eps_inv // rho_inv
    v = grid.reshape(rho_inv, k, b, rho_inv, k, b)
    v = v.transpose(0, 3, 1, 4, 2, 5)
    return v.reshape(rho_inv * rho_inv, k * k, b, b)


def block_variables(spec: LatticeSpec, colored: ColoredBonds, rho_inv: int, eps_inv: int,
                    scheme: RenormScheme | None = None) -> BlockStats:
    n = spec.n_side
    if eps_inv < rho_inv or eps_inv % rho_inv != 0 or n % eps_inv != 0:
        raise ValueError(f"need rho_inv | eps_inv | n_side, got rho_inv={rho_inv}, "
                         f"eps_inv={eps_inv}, n_side={n}")
    theta = _theta(spec, scheme)
    mask = crossing_mask(colored.labels, rho_inv)
    spins = colored.spin_grid()
    signed = np.where(mask, spins, 0).astype(np.int64)
    x = theta * _block_view(signed, rho_inv, eps_inv).sum(axis=(2, 3))
    plus = _block_view(signed > 0, rho_inv, eps_inv).any(axis=(2, 3))
    minus = _block_view(signed < 0, rho_inv, eps_inv).any(axis=(2, 3))
    y = plus.astype(np.int8) - minus.astype(np.int8)
    return BlockStats(x, y, rho_inv, eps_inv)


@dataclass(frozen=True)
class XYFit:
    c_hat: float
    discrepancy: float
    stderr: float
    beta_eps: float
    n_obs: int
    degenerate: bool = False


def xy_discrepancy(samples: Iterable[BlockStats] | tuple[np.ndarray, np.ndarray],
                   rho_inv: int, eps_inv: int, alpha1: float,
                   n_batches: int = 32) -> XYFit:
    """Fit ``c`` in ``sum X ~ c * beta(eps) * sum Y`` and report the L2 residual.

    ``beta(eps) = eps**2 / alpha1``.  Every (sample, Q) pair is one observation
    of the per-block identity.  ``samples`` may be an iterable of
    :class:`BlockStats` or a pair of ``(n_samples, nQ)`` arrays holding the
    per-Q sums of X and Y.  The error bar comes from batch means over samples.
    """
    if not alpha1 > 0:
        raise ValueError("alpha1 must be positive")
    if isinstance(samples, tuple):
        sx, sy = (np.asarray(a, dtype=float) for a in samples)
    else:
        rows = [(s.sum_x, s.sum_y) for s in samples if s.rho_inv == rho_inv and s.eps_inv == eps_inv]
        if not rows:
            raise ValueError("no block samples at the requested scales")
        sx = np.array([r[0] for r in rows], dtype=float)
        sy = np.array([r[1] for r in rows], dtype=float)
    beta_eps = (1.0 / eps_inv) ** 2 / alpha1
    n_obs = sx.size
    syy = float(np.sum(sy * sy))
    if syy == 0.0:
        return XYFit(float("nan"), float(np.sqrt(np.mean(sx * sx))), float("nan"),
                     beta_eps, n_obs, degenerate=True)
    slope = float(np.sum(sx * sy)) / syy
    resid2 = ((sx - slope * sy) ** 2).mean(axis=1)
    from .estimators import batch_means
    mean2, se2 = batch_means(resid2, n_batches)
    disc = float(np.sqrt(mean2))
    se = se2 / (2 * disc) if disc > 0 else 0.0
    return XYFit(slope / beta_eps, disc, float(se), beta_eps, n_obs)
