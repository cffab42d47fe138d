"""Cluster Monte Carlo for the square-lattice Ising model.

Both dynamics work on the graph "grid + ghost": under wired boundary
conditions the ghost is a spin frozen to the boundary sign, joined to the
boundary sites by one edge per missing neighbour.  Spins live in ``(N, N)``
int8 arrays; the kernels see them flattened row-major.

Swendsen-Wang alternates the two Edwards-Sokal half-steps: open each
satisfied edge with probability ``p = 1 - exp(-2 beta)``, then give each FK
cluster an independent fair sign (the ghost cluster keeps the boundary sign).
The fused kernel draws random numbers in exactly the order that
``color_clusters(bonds_from_spins(...))`` does, so both routes give identical
output for the same generator state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
from numba import njit

from .clusters import ClusterLabels, _label_kernel, find, union
from .lattice import BoundaryCondition, LatticeSpec, build_lattice


def critical_constants() -> tuple[float, float]:
    """``(beta_c, p_c)`` for the square lattice: ``ln(1+sqrt 2)/2`` and ``2 - sqrt 2``."""
    beta_c = 0.5 * math.log1p(math.sqrt(2.0))
    p_c = 2.0 - math.sqrt(2.0)
    return beta_c, p_c


BETA_C, P_C = critical_constants()


def bond_probability(beta: float) -> float:
    return -math.expm1(-2.0 * beta)


def chain_rng(seed: int, chain: int = 0) -> np.random.Generator:
    """Independent PCG64 stream number ``chain`` derived from ``seed``."""
    if seed is None:
        raise ValueError("a seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chain),))
    return np.random.Generator(np.random.PCG64(ss))


class Algorithm(enum.Enum):
    SWENDSEN_WANG = "swendsen-wang"
    WOLFF = "wolff"

    @classmethod
    def parse(cls, value: str | Algorithm) -> Algorithm:
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        aliases = {"sw": "swendsen-wang", "swendsenwang": "swendsen-wang"}
        return cls(aliases.get(key, key))


@lru_cache(maxsize=64)
def _shared_spec(n: int, boundary: BoundaryCondition) -> LatticeSpec:
    return LatticeSpec(n, boundary)


@dataclass
class SpinConfig:
    spins: np.ndarray
    boundary: BoundaryCondition

    def __post_init__(self):
        self.spins = np.ascontiguousarray(self.spins, dtype=np.int8)
        if self.spins.ndim != 2 or self.spins.shape[0] != self.spins.shape[1]:
            raise ValueError("spins must be a square 2-d array")
        self.boundary = BoundaryCondition.parse(self.boundary)

    @property
    def n_side(self) -> int:
        return self.spins.shape[0]

    @property
    def spec(self) -> LatticeSpec:
        return _shared_spec(self.n_side, self.boundary)

    def copy(self) -> SpinConfig:
        return SpinConfig(self.spins.copy(), self.boundary)

    def flipped(self) -> SpinConfig:
        return SpinConfig(-self.spins, self.boundary)

    @classmethod
    def uniform(cls, spec: LatticeSpec, value: int = 1) -> SpinConfig:
        return cls(np.full((spec.n_side, spec.n_side), value, dtype=np.int8), spec.boundary)


@dataclass
class BondConfig:
    """Open/closed bit per edge, in the canonical order of :class:`LatticeSpec`."""

    spec: LatticeSpec
    open: np.ndarray
    p: float
    q: int = 2

    def __post_init__(self):
        self.open = np.ascontiguousarray(self.open, dtype=np.bool_)
        if self.open.shape != (self.spec.n_edges,):
            raise ValueError(f"expected {self.spec.n_edges} edge bits, got {self.open.shape}")

    @property
    def n_open(self) -> int:
        return int(self.open.sum())


@dataclass
class ColoredBonds:
    """FK configuration with one sign per cluster.

    ``sign[r]`` holds the sign of the cluster rooted at ``r``; the ghost
    cluster always carries the boundary sign.
    """

    bond: BondConfig
    roots: np.ndarray
    sign: np.ndarray
    _labels: ClusterLabels | None = field(default=None, repr=False)

    @property
    def spec(self) -> LatticeSpec:
        return self.bond.spec

    @cached_property
    def labels(self) -> ClusterLabels:
        if self._labels is not None:
            return self._labels
        return ClusterLabels(self.spec, self.roots)

    def site_signs(self) -> np.ndarray:
        return self.sign[self.roots[: self.spec.n_sites]]

    def spin_grid(self) -> np.ndarray:
        n = self.spec.n_side
        return self.site_signs().reshape(n, n)

    def spins(self) -> SpinConfig:
        return SpinConfig(self.spin_grid(), self.spec.boundary)

    def omega_plus(self) -> np.ndarray:
        """Edge bits of the plus-coloured sub-configuration."""
        eu, _ = self.spec.edges
        return self.bond.open & (self.sign[self.roots[eu]] > 0)

    def omega_minus(self) -> np.ndarray:
        eu, _ = self.spec.edges
        return self.bond.open & (self.sign[self.roots[eu]] < 0)


@njit(cache=True, inline="always")
def _ghost_site(side, t, n):
    if side == 0:
        return t
    if side == 1:
        return (n - 1) * n + t
    if side == 2:
        return t * n
    return t * n + n - 1


@njit(cache=True)
def _bonds_kernel(spins, n, p, ghost_spin, rng):
    n_int = 2 * n * (n - 1)
    ne = n_int + (4 * n if ghost_spin != 0 else 0)
    bonds = np.zeros(ne, np.bool_)
    e = 0
    for r in range(n):
        for c in range(n):
            i = r * n + c
            s = spins[i]
            if c < n - 1:
                if spins[i + 1] == s and rng.random() < p:
                    bonds[e] = True
                e += 1
            if r < n - 1:
                if spins[i + n] == s and rng.random() < p:
                    bonds[e] = True
                e += 1
    if ghost_spin != 0:
        for side in range(4):
            for t in range(n):
                i = _ghost_site(side, t, n)
                if spins[i] == ghost_spin and rng.random() < p:
                    bonds[e] = True
                e += 1
    return bonds


@njit(cache=True)
def _color_kernel(roots, n_sites, ghost_root, ghost_spin, rng):
    sign = np.zeros(roots.shape[0], np.int8)
    if ghost_root >= 0:
        sign[ghost_root] = ghost_spin
    for i in range(n_sites):
        r = roots[i]
        if sign[r] == 0:
            sign[r] = 1 if rng.random() < 0.5 else -1
    return sign


@njit(cache=True, inline="always")
def _find_halving(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, inline="always")
def _link(parent, a, b):
    ra = _find_halving(parent, a)
    rb = _find_halving(parent, b)
    # the smaller index wins; with the row-major scan this keeps trees shallow
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@njit(cache=True)
def _sw_kernel(spins, n, p, ghost_spin, rng):
    """One Swendsen-Wang update in place; returns (bonds, roots, sign)."""
    n_sites = n * n
    wired = ghost_spin != 0
    nv = n_sites + 1 if wired else n_sites
    parent = np.arange(nv).astype(np.int32)
    n_int = 2 * n * (n - 1)
    ne = n_int + (4 * n if wired else 0)
    bonds = np.zeros(ne, np.bool_)
    e = 0
    for r in range(n):
        for c in range(n):
            i = r * n + c
            s = spins[i]
            if c < n - 1:
                if spins[i + 1] == s and rng.random() < p:
                    bonds[e] = True
                    _link(parent, i, i + 1)
                e += 1
            if r < n - 1:
                if spins[i + n] == s and rng.random() < p:
                    bonds[e] = True
                    _link(parent, i, i + n)
                e += 1
    if wired:
        for side in range(4):
            for t in range(n):
                i = _ghost_site(side, t, n)
                if spins[i] == ghost_spin and rng.random() < p:
                    bonds[e] = True
                    _link(parent, i, n_sites)
                e += 1
    sign = np.zeros(nv, np.int8)
    if wired:
        g = _find_halving(parent, n_sites)
        parent[n_sites] = g
        sign[g] = ghost_spin
    for i in range(n_sites):
        # roots never exceed the vertex index, so one pass leaves every path flat
        root = _find_halving(parent, i)
        parent[i] = root
        if sign[root] == 0:
            sign[root] = 1 if rng.random() < 0.5 else -1
        spins[i] = sign[root]
    return bonds, parent.astype(np.int64), sign


@njit(cache=True)
def _wolff_kernel(spins, n, p, ghost_spin, rng):
    """Grow and flip one Wolff cluster in place; returns the number of sites in it."""
    n_sites = n * n
    wired = ghost_spin != 0
    ghost = n_sites
    seed = rng.integers(0, n_sites)
    s0 = spins[seed]
    in_c = np.zeros(n_sites + 1, np.bool_)
    stack = np.empty(n_sites + 1, np.int64)
    in_c[seed] = True
    stack[0] = seed
    top = 1
    size = 1
    ghost_joinable = wired and ghost_spin == s0
    while top > 0:
        top -= 1
        i = stack[top]
        if i == ghost:
            for side in range(4):
                for t in range(n):
                    j = _ghost_site(side, t, n)
                    if not in_c[j] and spins[j] == s0 and rng.random() < p:
                        in_c[j] = True
                        stack[top] = j
                        top += 1
                        size += 1
            continue
        r = i // n
        c = i - r * n
        for k in range(4):
            if k == 0:
                if r == 0:
                    continue
                j = i - n
            elif k == 1:
                if r == n - 1:
                    continue
                j = i + n
            elif k == 2:
                if c == 0:
                    continue
                j = i - 1
            else:
                if c == n - 1:
                    continue
                j = i + 1
            if not in_c[j] and spins[j] == s0 and rng.random() < p:
                in_c[j] = True
                stack[top] = j
                top += 1
                size += 1
        if ghost_joinable and not in_c[ghost]:
            deg = (r == 0) + (r == n - 1) + (c == 0) + (c == n - 1)
            for _ in range(deg):
                if rng.random() < p:
                    in_c[ghost] = True
                    stack[top] = ghost
                    top += 1
                    break
    if in_c[ghost]:
        # the ghost is frozen: flipping the cluster and then every spin is the same move
        for i in range(n_sites):
            if not in_c[i]:
                spins[i] = -spins[i]
    else:
        for i in range(n_sites):
            if in_c[i]:
                spins[i] = -spins[i]
    return size


@njit(cache=True)
def _sw_sweeps(spins, n, p, ghost_spin, rng, k):
    """``k >= 1`` Swendsen-Wang updates in one call; returns the last one's output."""
    bonds, parent, sign = _sw_kernel(spins, n, p, ghost_spin, rng)
    for _ in range(k - 1):
        bonds, parent, sign = _sw_kernel(spins, n, p, ghost_spin, rng)
    return bonds, parent, sign


@njit(cache=True)
def _wolff_steps(spins, n, p, ghost_spin, rng, k):
    done = 0
    for _ in range(k):
        done += _wolff_kernel(spins, n, p, ghost_spin, rng)
    return done


@njit(cache=True)
def _wolff_until(spins, n, p, ghost_spin, rng, target):
    done = 0
    steps = 0
    while done < target:
        done += _wolff_kernel(spins, n, p, ghost_spin, rng)
        steps += 1
    return done, steps


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"bond probability must lie in [0, 1], got {p}")


def bonds_from_spins(spins: SpinConfig, p: float, rng: np.random.Generator) -> BondConfig:
    """Open every satisfied edge independently with probability ``p``."""
    _check_p(p)
    spec = spins.spec
    bits = _bonds_kernel(spins.spins.ravel(), spec.n_side, float(p),
                         spec.boundary.ghost_spin, rng)
    return BondConfig(spec, bits, float(p))


def color_clusters(bond: BondConfig, rng: np.random.Generator) -> ColoredBonds:
    """Give every FK cluster an independent fair sign; the ghost cluster keeps the boundary sign."""
    spec = bond.spec
    eu, ev = spec.edges
    roots, rank = _label_kernel(spec.n_vertices, eu, ev, bond.open)
    ghost_root = int(roots[spec.ghost]) if spec.ghost is not None else -1
    sign = _color_kernel(roots, spec.n_sites, ghost_root, spec.boundary.ghost_spin, rng)
    return ColoredBonds(bond, roots, sign, ClusterLabels(spec, roots, rank))


def colored_from_spins(spins: SpinConfig, p: float, rng: np.random.Generator) -> ColoredBonds:
    """Edwards-Sokal bond draw given ``spins``, with cluster signs read off the spins."""
    bond = bonds_from_spins(spins, p, rng)
    spec = bond.spec
    labels = label_clusters_cached(spec, bond)
    flat = spins.spins.ravel()
    sign = np.zeros(spec.n_vertices, dtype=np.int8)
    sign[labels.roots[: spec.n_sites]] = flat
    if spec.ghost is not None:
        sign[labels.ghost_root] = spec.boundary.ghost_spin
    return ColoredBonds(bond, labels.roots, sign, labels)


def label_clusters_cached(spec: LatticeSpec, bond: BondConfig) -> ClusterLabels:
    eu, ev = spec.edges
    roots, rank = _label_kernel(spec.n_vertices, eu, ev, bond.open)
    return ClusterLabels(spec, roots, rank)


def _sw_update(state: SpinConfig, p: float, rng: np.random.Generator,
               sweeps: int = 1) -> tuple[SpinConfig, ColoredBonds]:
    _check_p(p)
    spec = state.spec
    new = state.copy()
    bits, roots, sign = _sw_sweeps(new.spins.ravel(), spec.n_side, float(p),
                                   spec.boundary.ghost_spin, rng, sweeps)
    bond = BondConfig(spec, bits, float(p))
    return new, ColoredBonds(bond, roots, sign)


def swendsen_wang_sweep(state: SpinConfig, p: float, rng: np.random.Generator) -> SpinConfig:
    return _sw_update(state, p, rng)[0]


def wolff_step(state: SpinConfig, p: float, rng: np.random.Generator) -> SpinConfig:
    """One single-cluster update; a cluster holding the ghost flips its complement instead."""
    _check_p(p)
    new = state.copy()
    _wolff_kernel(new.spins.ravel(), new.n_side, float(p), new.boundary.ghost_spin, rng)
    return new


def _wolff_sweep_inplace(state: SpinConfig, p: float, rng: np.random.Generator,
                         n_steps: int | None = None) -> int:
    """Apply Wolff steps in place; returns the number of sites flipped.

    With ``n_steps`` the count is fixed.  Without it, steps continue until
    ``N^2`` sites have been touched; that stopping rule depends on the path,
    so it is only used to warm up and never between retained samples.
    """
    flat = state.spins.ravel()
    n = state.n_side
    g = state.boundary.ghost_spin
    if n_steps is not None:
        return int(_wolff_steps(flat, n, p, g, rng, n_steps))
    return int(_wolff_until(flat, n, p, g, rng, n * n)[0])


@dataclass(frozen=True)
class SamplerConfig:
    algorithm: Algorithm = Algorithm.SWENDSEN_WANG
    beta: float = BETA_C
    seed: int = 0
    thermalization_sweeps: int = 100
    decorrelation_sweeps: int = 2

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")
        if self.thermalization_sweeps < 0 or self.decorrelation_sweeps < 0:
            raise ValueError("sweep counts must be non-negative")
        if self.seed is None:
            raise ValueError("a seed is required")

    @property
    def p(self) -> float:
        return bond_probability(self.beta)

    def with_seed(self, seed: int) -> SamplerConfig:
        return replace(self, seed=seed)


Observer = Callable[[SpinConfig, ColoredBonds], object]


def _wolff_steps_taken(state: SpinConfig, p: float, rng: np.random.Generator) -> tuple[int, int]:
    done, steps = _wolff_until(state.spins.ravel(), state.n_side, p, state.boundary.ghost_spin,
                               rng, state.n_side ** 2)
    return int(done), int(steps)


def sample_chain(spec: LatticeSpec, cfg: SamplerConfig, n_samples: int, observer: Observer,
                 chain: int = 0, initial: SpinConfig | None = None) -> SpinConfig:
    """Run one Markov chain and hand ``n_samples`` decorrelated samples to ``observer``.

    The stream is a pure function of ``(spec, cfg, n_samples, chain)``.  Each
    delivered pair is a joint Edwards-Sokal sample: under Swendsen-Wang it is
    the output of the last sweep, under Wolff a fresh bond draw conditioned on
    the current spins.  Returns the final state.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = chain_rng(cfg.seed, chain)
    p = cfg.p
    state = initial.copy() if initial is not None else SpinConfig.uniform(spec, 1)
    if state.spec != spec:
        raise ValueError("initial state does not match the lattice")

    dec = cfg.decorrelation_sweeps
    if cfg.algorithm is Algorithm.SWENDSEN_WANG:
        if cfg.thermalization_sweeps:
            state, _ = _sw_update(state, p, rng, cfg.thermalization_sweeps)

        def advance(st):
            # consecutive sweeps share one kernel call; the draws are the same
            return _sw_update(st, p, rng, dec)
    else:
        # warm up with size-based sweeps, then freeze the number of clusters
        # per sweep so that retained samples sit at deterministic times
        flipped = steps = 0
        state = state.copy()
        for _ in range(cfg.thermalization_sweeps):
            f, k = _wolff_steps_taken(state, p, rng)
            flipped += f
            steps += k
        n_sites = spec.n_sites
        per_sweep = max(1, round(n_sites * steps / flipped)) if flipped else n_sites

        def advance(st):
            st = st.copy()
            _wolff_sweep_inplace(st, p, rng, per_sweep * dec)
            return st, None

    for _ in range(n_samples):
        colored = None
        if dec:
            state, colored = advance(state)
        if colored is None:
            colored = colored_from_spins(state, p, rng)
        observer(state, colored)
    return state


__all__ = [
    "Algorithm", "BETA_C", "BondConfig", "ColoredBonds", "P_C", "SamplerConfig", "SpinConfig",
    "bond_probability", "bonds_from_spins", "build_lattice", "chain_rng", "color_clusters",
    "colored_from_spins", "critical_constants", "sample_chain", "swendsen_wang_sweep",
    "wolff_step",
]
