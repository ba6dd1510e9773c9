"""
Tests for the Littlewood-Paley machinery and the inequality harness.
"""

import csv
import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.services.lab.harmonic import BoxSpec, SpectralField3D, l2_norm
from app.services.lab.lp import (
    RATIO_COLUMNS,
    BesovIndex,
    DyadicBank,
    NormKind,
    bank_for,
    besov_norm,
    check_bernstein,
    check_heat_decay,
    equivalence_band,
    inequality_harness,
    lp_box,
    mixed_sobolev_norm,
    parse_inequality,
    partition_residual,
    quasi_orthogonality,
    random_field,
    sobolev_norm,
    special_norms,
    write_ratios_csv,
)


def _mode(box: BoxSpec, k: int) -> SpectralField3D:
    x1, _, _ = box.positions()
    return SpectralField3D.from_physical(box, np.broadcast_to(np.cos(k * x1), (box.n,) * 3))


class TestDyadicBank:

    def test_rejects_overlapping_profile(self):
        with pytest.raises(ValidationError):
            DyadicBank(inner=1.0, outer=3.0)

    def test_level_below_low_pass_is_rejected(self):
        with pytest.raises(ValueError):
            DyadicBank().multiplier(-2, np.zeros(3))

    @pytest.mark.parametrize("n", [16, 32])
    def test_blocks_partition_unity(self, n):
        box = lp_box(n)
        assert partition_residual(bank_for(box), box) < 1e-12

    def test_bank_covers_the_box(self):
        box = lp_box(16)
        top = math.sqrt(3.0) * 8.0
        assert bank_for(box).covered_radius >= top


class TestQuasiOrthogonality:

    def test_separated_blocks_do_not_interact(self):
        box = lp_box(32)
        report = quasi_orthogonality(random_field(box, 1), random_field(box, 2))
        assert report.pairs_checked > 0
        assert report.block_residual < 1e-12
        assert report.product_residual < 1e-12


class TestBernstein:

    def test_gradient_bound_on_annuli(self):
        report = check_bernstein(2, pairs=((2.0, 2.0),), samples=3)
        assert report.passed
        # the annulus spans [0.75, 8/3] * 2^j
        assert all(math.log2(0.75) - 1e-9 <= v <= math.log2(8.0 / 3.0) + 1e-9 for v in report.log2_ratios)

    def test_negative_level_is_rejected(self):
        with pytest.raises(ValueError):
            check_bernstein(-1)

    def test_pairs_must_increase(self):
        with pytest.raises(ValueError):
            check_bernstein(1, pairs=((math.inf, 2.0),))

    def test_sup_bound_without_derivative(self):
        # |Delta_j f|_inf <= C 2^{3j/2} |Delta_j f|_2, and Hoelder on the torus bounds it below
        j = 2
        report = check_bernstein(j, pairs=((2.0, math.inf),), samples=3, orders=(0,))
        floor = -0.5 * (3.0 * math.log2(2.0 * math.pi) + 3.0 * j)
        assert report.passed
        assert len(report.log2_ratios) == 3
        assert all(floor - 1e-9 <= v <= 0.0 for v in report.log2_ratios)

    def test_both_sides_are_scored_for_distinct_exponents(self):
        j = 2
        report = check_bernstein(j, pairs=((2.0, math.inf),), samples=3, orders=(1,))
        floor = -0.5 * (3.0 * math.log2(2.0 * math.pi) + 3.0 * j)
        assert report.passed
        assert report.max_abs_log2 == pytest.approx(max(max(v, floor - v) for v in report.log2_ratios))

    def test_equal_exponents_skip_the_trivial_ratio(self):
        report = check_bernstein(2, pairs=((2.0, 2.0),), samples=2, orders=(0, 1))
        assert len(report.log2_ratios) == 2

    def test_derivative_order_is_validated(self):
        with pytest.raises(ValueError):
            check_bernstein(2, orders=(2,))


class TestHeatDecay:

    def test_single_mode_decays_at_its_wavenumber(self):
        box = lp_box(16)
        report = check_heat_decay(1, field=_mode(box, 2))
        assert report.rate == pytest.approx(4.0, rel=1e-9)
        assert report.passed

    def test_random_field_rate_lies_in_the_band(self):
        assert check_heat_decay(2, seed=3).passed

    def test_low_pass_level_is_rejected(self):
        with pytest.raises(ValueError):
            check_heat_decay(-1)


class TestNorms:

    def test_sobolev_zero_is_l2(self):
        f = random_field(lp_box(16), 4)
        assert sobolev_norm(f, 0.0, 0.0) == pytest.approx(l2_norm(f), rel=1e-12)

    def test_mixed_norm_without_vertical_weight(self):
        f = random_field(lp_box(16), 5)
        assert mixed_sobolev_norm(f, 0.75, 0.0) == pytest.approx(sobolev_norm(f, 0.75, 0.0), rel=1e-12)

    def test_besov_sobolev_ratio_lies_in_equivalence_band(self):
        box = lp_box(16)
        f = random_field(box, 6)
        s, t = 0.5, 0.25
        ratio = besov_norm(f, BesovIndex(s=s, t=t), anisotropic=True) / sobolev_norm(f, s, t)
        low, high = equivalence_band(box, s, t)
        assert low * (1 - 1e-12) <= ratio <= high * (1 + 1e-12)

    def test_special_norms_of_constant(self):
        box = BoxSpec(n=8, L=1.0)
        one = SpectralField3D.from_physical(box, np.ones((8, 8, 8)))
        assert special_norms(one, NormKind.L) == pytest.approx(0.5)
        assert special_norms(one, "SqrtL") == pytest.approx(1.0 / math.sqrt(2.0))
        assert special_norms(one, NormKind.LOG_LIP) == pytest.approx(0.0, abs=1e-12)

    def test_special_norms_need_two_exponents(self):
        with pytest.raises(ValueError):
            special_norms(random_field(lp_box(8), 0), NormKind.L, p_max=1)


class TestRandomField:

    def test_same_seed_same_field(self):
        a = random_field(lp_box(16), 9)
        b = random_field(lp_box(16), 9)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
        assert a.mean == 0.0

    def test_refinement_keeps_the_continuous_field(self):
        coarse = random_field(lp_box(16), 9, base_n=16)
        fine = random_field(lp_box(32), 9, base_n=16)
        assert l2_norm(fine) == pytest.approx(l2_norm(coarse), rel=1e-12)

    def test_base_lattice_must_fit(self):
        with pytest.raises(ValueError):
            random_field(lp_box(8), 0, base_n=16)


class TestInequalityHarness:

    @pytest.mark.parametrize("text, expected", [
        ("LemmaA1(4)", ("LemmaA1", (4.0,))),
        ("Interp", ("Interp", (0.5,))),
        ("Algebra(2, 1)", ("Algebra", (2.0, 1.0))),
        (" Sharp ", ("Sharp", ())),
    ])
    def test_parse(self, text, expected):
        assert parse_inequality(text) == expected

    @pytest.mark.parametrize("text", ["LemmaA1(2)", "AppenL(0.5)", "Algebra(1.5)", "Bogus", "Interp(2)"])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            parse_inequality(text)

    def test_interpolation_never_exceeds_one(self):
        report = inequality_harness("Interp", samples=3, n=8)
        assert report.lemma == "Interp(0.5)"
        assert report.finite
        assert report.bound == pytest.approx(1.0 + 1e-8)
        assert report.max_ratio <= report.bound

    def test_ratios_csv(self, tmp_path):
        report = inequality_harness("Sharp", samples=2, n=8)
        path = write_ratios_csv(tmp_path / "out" / "ratios.csv", [report])
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == RATIO_COLUMNS
        assert len(rows) == 1 + len(report.rows)
        assert all(float(row[4]) > 0.0 for row in rows[1:])

    @pytest.mark.parametrize("which", ["LemmaA1(4)", "LemmaA2", "Sharp", "AppenL(0.75)", "Algebra(1.5,1)"])
    def test_constants_are_finite_and_stable(self, which):
        report = inequality_harness(which, samples=5, seed=0, n=16)
        assert report.finite
        assert report.stable
        assert len(report.rows) + report.skipped == 5
        assert report.max_ratio > 0.0
