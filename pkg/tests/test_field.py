import math
from fractions import Fraction

import numpy as np
import pytest

from critising.field import (FieldGrid, RenormScheme, SobolevCoeffs, _cell_integrals,
                             default_j_max, field_from_spins, field_norm_sq, fourier_coefficient,
                             magnetization, restricted_norm_scaling, sobolev_coefficients,
                             sobolev_norm_sq, weight_tail)
from critising.lattice import SubSquare, build_lattice
from critising.sampler import SamplerConfig, SpinConfig, sample_chain

FOURTH_ROOT_2 = 2 ** 0.25


def const_field(n, value=1.0):
    return FieldGrid(np.full((n, n), value), Fraction(1, n))


class TestScheme:
    def test_all_plus_cells(self):
        spec = build_lattice(4, "plus")
        f = field_from_spins(spec, SpinConfig.uniform(spec))
        assert np.allclose(f.cell_values, 4 ** 0.125)
        assert f.cell_values[0, 0] == pytest.approx(1.1892071, abs=1e-7)

    def test_flip_negates(self):
        spec = build_lattice(8, "free")
        rng = np.random.default_rng(0)
        s = SpinConfig(np.where(rng.random((8, 8)) < 0.5, 1, -1), "free")
        assert np.array_equal(field_from_spins(spec, s.flipped()).cell_values,
                              -field_from_spins(spec, s).cell_values)

    def test_empirical_matches_wu_at_quarter_power(self):
        spec = build_lattice(16, "free")
        a = float(spec.mesh)
        s = SpinConfig.uniform(spec, -1)
        wu = field_from_spins(spec, s, RenormScheme.wu())
        emp = field_from_spins(spec, s, RenormScheme.empirical(a ** 0.25))
        assert np.allclose(wu.cell_values, emp.cell_values, rtol=1e-14, atol=0)

    @pytest.mark.parametrize("bad", [0.0, -0.3])
    def test_nonpositive_rho_rejected(self, bad):
        with pytest.raises(ValueError):
            RenormScheme.empirical(bad)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            field_from_spins(build_lattice(4, "free"), np.ones((8, 8)))


class TestMagnetization:
    def test_all_plus_and_minus(self):
        spec = build_lattice(4, "plus")
        assert magnetization(spec, SpinConfig.uniform(spec)) == pytest.approx(FOURTH_ROOT_2, rel=1e-15)
        assert magnetization(spec, SpinConfig.uniform(spec, -1)) == pytest.approx(-FOURTH_ROOT_2, rel=1e-15)

    def test_half_and_half(self):
        spec = build_lattice(4, "free")
        s = np.ones((4, 4))
        s[:2] = -1
        assert magnetization(spec, s) == 0.0

    def test_equals_field_integral(self):
        spec = build_lattice(32, "free")
        rng = np.random.default_rng(1)
        for _ in range(10):
            s = np.where(rng.random((32, 32)) < 0.5, 1, -1)
            assert field_from_spins(spec, s).integral() == pytest.approx(magnetization(spec, s),
                                                                         rel=1e-13, abs=1e-15)


class TestCoefficients:
    def test_zero_field(self):
        z = const_field(8, 0.0)
        assert all(fourier_coefficient(z, j, k) == 0 for j in range(1, 5) for k in range(1, 5))

    def test_constant_field(self):
        f = const_field(16)
        assert fourier_coefficient(f, 1, 1) == pytest.approx(8 / math.pi ** 2, abs=1e-14)
        assert fourier_coefficient(f, 2, 1) == pytest.approx(0.0, abs=1e-15)

    def test_constant_field_exact_on_coarse_grid(self):
        # closed-form cell integrals do not depend on the grid for a constant field
        for n in (2, 4, 32):
            assert fourier_coefficient(const_field(n), 3, 5) == pytest.approx(
                2 * (2 / (3 * math.pi)) * (2 / (5 * math.pi)), abs=1e-14)

    @pytest.mark.parametrize("j,k", [(0, 1), (1, 0), (-2, 3)])
    def test_bad_indices(self, j, k):
        with pytest.raises(ValueError):
            fourier_coefficient(const_field(4), j, k)

    def test_matrix_agrees_with_single_coefficients(self):
        rng = np.random.default_rng(2)
        f = FieldGrid(rng.normal(size=(8, 8)), Fraction(1, 8))
        a = sobolev_coefficients(f, 10).a
        for j, k in [(1, 1), (3, 7), (10, 2)]:
            assert a[j - 1, k - 1] == pytest.approx(fourier_coefficient(f, j, k), abs=1e-13)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        f = FieldGrid(rng.normal(size=(16, 16)), Fraction(1, 16))
        g = FieldGrid(rng.normal(size=(16, 16)), Fraction(1, 16))
        af, ag = sobolev_coefficients(f, 40).a, sobolev_coefficients(g, 40).a
        assert np.allclose(sobolev_coefficients(f + g, 40).a, af + ag, atol=1e-12, rtol=0)
        assert np.array_equal(sobolev_coefficients(-f, 40).a, -af)

    @pytest.mark.parametrize("j,k", [(1, 1), (3, 2), (5, 7)])
    def test_cell_averaged_basis_function(self, j, k):
        prev = 1.0
        for n in (16, 32, 64, 128):
            ix, iy = _cell_integrals(n, 8, 2.0), _cell_integrals(n, 8, 1.0)
            vals = np.outer(iy[k - 1], ix[j - 1]) * n * n
            a = sobolev_coefficients(FieldGrid(vals, Fraction(1, n)), 8).a
            gap = 1.0 - a[j - 1, k - 1]
            assert 0 < gap <= 1.01 * (j * j + k * k) * math.pi ** 2 / (12 * n * n)
            assert gap < prev
            prev = gap
            off = a.copy()
            off[j - 1, k - 1] = 0
            assert np.abs(off).max() < 1e-12

    def test_default_truncation(self):
        assert default_j_max(16) == 64
        assert default_j_max(128) == 256


class TestNorm:
    def test_single_terms(self):
        a = np.zeros((4, 4))
        a[0, 0] = 1
        assert sobolev_norm_sq(a, 3).value == pytest.approx(0.125, abs=1e-16)
        a = np.zeros((4, 4))
        a[0, 1] = 1
        assert sobolev_norm_sq(SobolevCoeffs(a), 2).value == pytest.approx(0.04, abs=1e-16)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            sobolev_norm_sq(np.zeros((2, 2)), -0.5)

    def test_nonincreasing_in_alpha(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(20, 20))
        vals = [sobolev_norm_sq(a, al).value for al in (0, 0.5, 1, 2, 3, 5)]
        assert all(x >= y for x, y in zip(vals, vals[1:]))

    def test_weight_tail_bounds_the_actual_tail(self):
        for alpha in (1.5, 2.0, 3.0):
            j = np.arange(1, 2001, dtype=float)
            w = (j[:, None] ** 2 + j[None, :] ** 2) ** (-alpha)
            for jm in (16, 64):
                tail = w.sum() - w[:jm, :jm].sum()
                assert tail <= weight_tail(jm, alpha)
                assert weight_tail(jm, alpha) < 3 * tail
        assert math.isinf(weight_tail(64, 1.0))

    def test_truncation_consistency_on_a_sample(self):
        spec = build_lattice(32, "plus")
        fields = []
        sample_chain(spec, SamplerConfig(seed=11), 1,
                     lambda st, _c: fields.append(field_from_spins(spec, st)))
        lo = sobolev_norm_sq(sobolev_coefficients(fields[0], 64), 2)
        hi = sobolev_norm_sq(sobolev_coefficients(fields[0], 128), 2)
        assert 0 <= hi.value - lo.value <= lo.tail_bound
        assert hi.tail_bound < lo.tail_bound


class TestRestricted:
    def _fields(self, n_samples, side=16):
        spec = build_lattice(side, "plus")
        out = []
        sample_chain(spec, SamplerConfig(seed=12), n_samples,
                     lambda st, _c: out.append(field_from_spins(spec, st)))
        return out

    def test_full_square_is_plain_norm(self):
        fields = self._fields(64)
        r = restricted_norm_scaling(fields, SubSquare(0, 0, 16), j_max=32)
        direct = np.mean([field_norm_sq(f, 2.0, 32) for f in fields])
        assert r.area == 1.0
        assert r.ratio == pytest.approx(direct, rel=1e-12)
        assert r.flagged

    def test_zero_fields(self):
        zeros = [const_field(16, 0.0)] * 100
        r = restricted_norm_scaling(zeros, SubSquare(4, 4, 8), j_max=32)
        assert r.ratio == 0.0 and r.stderr == 0.0

    def test_restriction_zeroes_outside(self):
        f = const_field(8, 2.0).restricted(SubSquare(2, 2, 4))
        assert f.cell_values.sum() == 2.0 * 16
        assert f.integral() == pytest.approx(0.5)

    def test_outside_grid_rejected(self):
        with pytest.raises(ValueError):
            restricted_norm_scaling([const_field(8)], SubSquare(6, 6, 4))
