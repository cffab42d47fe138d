"""Randomized invariants checked with hypothesis."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from critising.cli import fmt
from critising.clusters import cutoff_decomposition, label_clusters
from critising.estimators import MomentAccumulator, log_mgf, rescaled_magnetization, scale_covariance_ks
from critising.field import field_from_spins, magnetization
from critising.lattice import build_lattice, dyadic_blocks
from critising.sampler import P_C, BondConfig, SpinConfig, bonds_from_spins, chain_rng, color_clusters

from test_clusters import bfs_partition

FAST = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])

sides = st.sampled_from([2, 3, 4, 5, 8])
boundaries = st.sampled_from(["free", "plus", "minus"])
seeds = st.integers(0, 2 ** 32 - 1)


@FAST
@given(sides, boundaries)
def test_edge_count(n, boundary):
    spec = build_lattice(n, boundary)
    wired = boundary != "free"
    assert spec.n_edges == 2 * n * (n - 1) + (4 * n if wired else 0)
    eu, ev = spec.edges
    assert np.all(eu < ev)


@FAST
@given(sides, boundaries, seeds, st.floats(0.0, 1.0))
def test_labels_match_breadth_first_search(n, boundary, seed, p):
    spec = build_lattice(n, boundary)
    bits = np.random.default_rng(seed).random(spec.n_edges) < p
    assert label_clusters(spec, BondConfig(spec, bits, 0.5)).partition() == bfs_partition(spec, bits)


@FAST
@given(st.sampled_from([4, 8, 16]), st.sampled_from([1, 2, 4]))
def test_dyadic_blocks_tile_the_grid(n, r):
    spec = build_lattice(n, "free")
    cover = np.concatenate([q.site_indices(n) for q in dyadic_blocks(spec, r)])
    assert np.array_equal(np.sort(cover), np.arange(n * n))


@FAST
@given(st.sampled_from([4, 8, 16]), boundaries, seeds)
def test_flip_negates_field_and_magnetization(n, boundary, seed):
    spec = build_lattice(n, boundary)
    rng = np.random.default_rng(seed)
    s = SpinConfig(np.where(rng.random((n, n)) < 0.5, 1, -1).astype(np.int8), boundary)
    assert magnetization(spec, s.flipped()) == -magnetization(spec, s)
    assert np.array_equal(field_from_spins(spec, s.flipped()).cell_values,
                          -field_from_spins(spec, s).cell_values)


@FAST
@given(st.sampled_from([8, 16]), st.sampled_from(["free", "plus"]), seeds)
def test_cutoff_pieces_sum_to_magnetization(n, boundary, seed):
    spec = build_lattice(n, boundary)
    rng = chain_rng(seed)
    s = SpinConfig(np.where(rng.random((n, n)) < 0.5, 1, -1).astype(np.int8), boundary)
    col = color_clusters(bonds_from_spins(s, P_C, rng), rng)
    m = magnetization(spec, col.spins())
    for r in (2, 4):
        cut, rest = cutoff_decomposition(spec, col, r)
        assert math.isclose(cut + rest, m, rel_tol=1e-12, abs_tol=1e-12)


@FAST
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=300), st.integers(1, 299), st.integers(1, 64))
def test_accumulator_split_and_merge(xs, cut, batch):
    cut = min(cut, len(xs))
    whole = MomentAccumulator(batch).add(xs)
    merged = MomentAccumulator(batch).add(xs[:cut]).merge(MomentAccumulator(batch).add(xs[cut:]))
    assert merged.count == whole.count == len(xs)
    assert np.allclose(merged.sums, whole.sums, rtol=1e-9, atol=1e-6)


@FAST
@given(st.floats(allow_nan=False))
def test_number_format_round_trips(x):
    assert float(fmt(x)) == x


@FAST
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=200), st.floats(-2, 2), st.floats(-1, 1))
def test_log_mgf_shift(xs, c, t):
    x = np.array(xs)
    assert math.isclose(float(log_mgf(x + c, t)[0]), float(log_mgf(x, t)[0]) + c * t,
                        rel_tol=1e-9, abs_tol=1e-9)


@FAST
@given(seeds)
def test_ks_ignores_a_common_rescaling(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=1200), rng.normal(0.1, 1, size=1300)
    base = scale_covariance_ks(a, b).statistic
    assert scale_covariance_ks(3 * a, 3 * b).statistic == base


@FAST
@given(st.integers(-4096, 4096), st.sampled_from([2, 8, 64, 512]))
def test_rescaled_magnetization_is_linear(total, n):
    assert math.isclose(float(rescaled_magnetization(total, n)), total * n ** (-15 / 8), rel_tol=1e-14)
