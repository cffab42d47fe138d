import csv
import math

import numpy as np
import pytest

from critising.oracle import (GHOST, GOLDEN_FIELDS, MAX_FK_EDGES, SmallGraph,
                              exact_fk_probabilities, exact_mgf_concavity,
                              exact_spin_expectations, fk_probability_for_beta, ghs_triple_check,
                              golden_rows, grid_graph, random_graph, star_graph, write_golden)
from critising.sampler import BETA_C, P_C

# generated by `crit oracle`; frozen so later changes cannot drift silently
GOLDEN = {
    ("2x2-free", "<s0 s1>"): 0.4714045207910317,
    ("2x2-free", "P(0<->1)"): 0.4714045207910316,
    ("3x3-plus", "<s4>"): 0.8858375057452237,
    ("3x3-plus", "<s0>"): 0.9177473332931483,
    ("3x3-plus", "<s1>"): 0.9040972890027283,
    ("3x3-plus", "P(4<->ghost)"): 0.8858375057452237,
    ("3x3-plus", "E[M]"): 8.17321599492873,
    ("3x3-plus", "E[M^2]"): 69.41667569220218,
    ("star4", "P(0<->ghost)"): 0.9428090415820632,
    ("4x4-plus", "<s5>"): 0.8709004058588031,
}


@pytest.fixture(scope="module")
def golden_table():
    return golden_rows()


@pytest.fixture(scope="module")
def golden(golden_table):
    return {(r["graph_id"], r["observable"]): float(r["exact_value"]) for r in golden_table}


def test_golden_values_are_frozen(golden):
    assert set(golden) == set(GOLDEN)
    for key, value in GOLDEN.items():
        assert golden[key] == pytest.approx(value, rel=1e-13, abs=1e-15)


def test_golden_closed_forms(golden):
    assert golden[("2x2-free", "<s0 s1>")] == pytest.approx(math.sqrt(2) / 3, abs=1e-15)
    assert golden[("star4", "P(0<->ghost)")] == pytest.approx(2 * math.sqrt(2) / 3, abs=1e-15)


def test_golden_csv_round_trip(tmp_path, golden_table):
    path = write_golden(tmp_path / "golden.csv", golden_table)
    raw = path.read_bytes()
    assert raw.count(b"\r\n") == len(GOLDEN) + 1
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == GOLDEN_FIELDS
    for r in rows:
        assert float(r["exact_value"]) == pytest.approx(GOLDEN[(r["graph_id"], r["observable"])],
                                                        rel=1e-13)
        assert r["generator"] == "crit oracle"


class TestSpinEnumeration:
    def test_two_by_two_closed_form(self):
        en = exact_spin_expectations(grid_graph(2), BETA_C, [(0, 1), (0, 3)])
        c, s = math.cosh(4 * BETA_C), math.sinh(4 * BETA_C)
        assert c == pytest.approx(3.0) and s == pytest.approx(2 * math.sqrt(2))
        assert en.values[(0, 1)] == pytest.approx(s / (c + 3), abs=1e-15)

    @pytest.mark.parametrize("h", [0.0, 0.3, 1.7])
    def test_single_spin_in_a_field(self, h):
        g = SmallGraph(1, (), fields=(h,))
        assert exact_spin_expectations(g, 0.9, [(0,)]).values[(0,)] == pytest.approx(math.tanh(h))

    def test_single_site_with_four_ghost_bonds(self):
        en = exact_spin_expectations(star_graph(4), BETA_C, [(0,)])
        assert en.values[(0,)] == pytest.approx(math.tanh(4 * BETA_C), abs=1e-15)

    def test_probabilities_and_distribution(self):
        en = exact_spin_expectations(grid_graph(3, "plus"), BETA_C)
        assert en.probs.sum() == pytest.approx(1.0, abs=1e-15)
        dist = en.magnetization_distribution
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-15)
        assert set(dist) <= set(range(-9, 10, 2))

    def test_ghost_in_observable_is_plus_one(self):
        en = exact_spin_expectations(star_graph(2), 0.5)
        assert en.expectation([0, GHOST]) == en.expectation([0])

    def test_size_cap(self):
        with pytest.raises(ValueError):
            exact_spin_expectations(SmallGraph(21, ()))

    def test_relabelling_invariance(self):
        g = grid_graph(3, "plus").with_fields(np.linspace(0, 0.4, 9))
        perm = [4, 7, 1, 0, 8, 2, 6, 3, 5]
        a = exact_spin_expectations(g, BETA_C, [(i,) for i in range(9)])
        b = exact_spin_expectations(g.relabeled(perm), BETA_C, [(perm[i],) for i in range(9)])
        for i in range(9):
            assert a.values[(i,)] == pytest.approx(b.values[(perm[i],)], abs=1e-14)
        assert a.log_z == pytest.approx(b.log_z, rel=1e-14)


class TestFK:
    def test_star_closed_form(self):
        fk = exact_fk_probabilities(star_graph(4), P_C, 2, [(0, GHOST)])
        q4 = (1 - P_C) ** 4
        assert fk.connect[(0, GHOST)] == pytest.approx((1 - q4) / (1 + q4), abs=1e-15)
        assert fk.connect[(0, GHOST)] == pytest.approx(2 * math.sqrt(2) / 3, abs=1e-15)

    def test_wired_ring_reduces_to_star(self):
        # forcing every ring edge open merges the outer ring of 3x3 into the ghost
        g = grid_graph(3, "plus")
        centre_edges = [k for k, e in enumerate(g.edges) if 4 in e]
        p = np.ones(len(g.edges))
        p[centre_edges] = P_C
        fk = exact_fk_probabilities(g, p, 2, [(4, GHOST)])
        assert fk.connect[(4, GHOST)] == pytest.approx(2 * math.sqrt(2) / 3, abs=1e-13)

    def test_p_one_connects_everything(self):
        g = grid_graph(3, "free")
        fk = exact_fk_probabilities(g, 1.0, 2, [(0, 8), (2, 6)])
        assert all(v == 1.0 for v in fk.connect.values())

    def test_edwards_sokal_free_cycle(self):
        g = grid_graph(2)
        spin = exact_spin_expectations(g, BETA_C, [(0, 1), (0, 3)])
        fk = exact_fk_probabilities(g, P_C, 2, [(0, 1), (0, 3)])
        for ev in [(0, 1), (0, 3)]:
            assert fk.connect[ev] == pytest.approx(spin.values[ev], abs=1e-12)

    def test_edwards_sokal_on_random_graphs(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            g = random_graph(rng, 6).with_fields(0.0)
            if len(g.edges) > 16:
                continue
            beta = float(rng.uniform(0.1, 1.0))
            pairs = [(0, v) for v in range(1, g.n_free)]
            if g.has_ghost:
                pairs += [(v, GHOST) for v in range(g.n_free)]
            spin = exact_spin_expectations(g, beta, pairs)
            fk = exact_fk_probabilities(g, fk_probability_for_beta(g, beta), 2, pairs)
            for ev in pairs:
                assert fk.connect[ev] == pytest.approx(spin.values[ev], abs=1e-12)

    def test_edwards_sokal_plus_centre(self, golden):
        assert golden[("3x3-plus", "P(4<->ghost)")] == pytest.approx(
            golden[("3x3-plus", "<s4>")], abs=1e-12)

    def test_edge_cap_and_validation(self):
        too_many = SmallGraph(2, ((0, 1),) * (MAX_FK_EDGES + 1))
        with pytest.raises(ValueError):
            exact_fk_probabilities(too_many)
        with pytest.raises(ValueError):
            exact_fk_probabilities(star_graph(2), 1.2)
        with pytest.raises(ValueError):
            exact_fk_probabilities(star_graph(2), 0.5, 2, [(0, 5)])


class TestGHS:
    def test_single_vertex_zero_field(self):
        r = ghs_triple_check(SmallGraph(1, ()), BETA_C, 0.0)
        assert r.max_value == 0.0

    def test_two_by_two_with_field(self):
        assert ghs_triple_check(grid_graph(2), BETA_C, 0.3).max_value <= 1e-12

    def test_three_by_three_plus(self):
        r = ghs_triple_check(grid_graph(3, "plus"), BETA_C, 0.0)
        assert r.n_triples == 9 ** 3
        assert r.max_value <= 1e-12

    def test_random_ferromagnets(self):
        rng = np.random.default_rng(np.random.SeedSequence(8))
        worst = max(ghs_triple_check(random_graph(rng), float(rng.uniform(0.05, 1.5))).max_value
                    for _ in range(100))
        assert worst <= 1e-12

    def test_hypothesis_violations_rejected(self):
        with pytest.raises(ValueError):
            ghs_triple_check(SmallGraph(2, ((0, 1),), couplings=(-0.5,)))
        with pytest.raises(ValueError):
            ghs_triple_check(grid_graph(2), BETA_C, -0.1)
        with pytest.raises(ValueError):
            ghs_triple_check(grid_graph(2), -1.0)


class TestMgfConcavity:
    def test_star_closed_form(self):
        t = np.array([0.0, 0.5, 2.0])
        u = t + 4 * BETA_C
        assert np.allclose(exact_mgf_concavity(star_graph(4), BETA_C, t),
                           -2 * np.tanh(u) / np.cosh(u) ** 2, atol=1e-13)

    def test_symmetric_free_graph_at_zero(self):
        assert exact_mgf_concavity(grid_graph(3), BETA_C, [0.0])[0] == pytest.approx(0.0, abs=1e-12)

    def test_three_by_three_plus(self):
        t = np.round(np.arange(0, 31) * 0.1, 10)
        vals = exact_mgf_concavity(grid_graph(3, "plus"), BETA_C, t)
        assert vals.max() <= 1e-9

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            exact_mgf_concavity(star_graph(1), BETA_C, [])


class TestGraphs:
    def test_grid_graph_edges(self):
        g = grid_graph(3, "plus")
        assert g.n_free == 9 and len(g.edges) == 24 and g.ghost == 9
        with pytest.raises(ValueError):
            grid_graph(3, "minus")

    def test_bad_edges(self):
        with pytest.raises(ValueError):
            SmallGraph(2, ((0, 0),))
        with pytest.raises(ValueError):
            SmallGraph(2, ((0, GHOST),))
        with pytest.raises(ValueError):
            SmallGraph(2, ((0, 1),), fields=(1.0,))

    def test_relabel_needs_permutation(self):
        with pytest.raises(ValueError):
            grid_graph(2).relabeled([0, 0, 1, 2])
