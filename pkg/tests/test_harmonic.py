"""
Tests for the periodic Fourier calculus and the u^r/r identity checks.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import AxisymmetryError, MeanModeError
from app.services.lab.fields import Parity, lp_norm as meridian_lp_norm, make_grid, sample
from app.services.lab.harmonic import (
    BoxSpec,
    KernelConstants,
    SpectralField3D,
    balanced_profile,
    check_sy_bound,
    derivative,
    dr_over_r_inv_laplacian,
    harmonic_harness,
    heat,
    identity_check,
    identity_study,
    inverse_laplacian,
    kernel_check,
    l2_norm,
    laplacian,
    lp_norm,
    meridian_dr_over_r_inv_laplacian,
    random_vortex_profile,
    riesz,
    ring_sy_bound,
    sample_axisymmetric,
)


def _random_field(rng, n=8, L=2.0 * math.pi):
    box = BoxSpec(n=n, L=L)
    field, _ = SpectralField3D.from_physical(box, rng.normal(size=(n, n, n))).without_mean()
    return field


def _cos_x1(n=8):
    box = BoxSpec(n=n, L=2.0 * math.pi)
    x1, _, _ = box.positions()
    return SpectralField3D.from_physical(box, np.broadcast_to(np.cos(x1), (n, n, n)))


class TestBoxSpec:

    @pytest.mark.parametrize("n, L", [(12, 1.0), (4, 1.0), (16, 0.0)])
    def test_rejects_bad_boxes(self, n, L):
        with pytest.raises(ValidationError):
            BoxSpec(n=n, L=L)

    def test_nodes_are_cell_centered(self):
        box = BoxSpec(n=8, L=4.0)
        np.testing.assert_allclose(box.coords, -2.0 + (np.arange(8) + 0.5) * 0.5)
        assert not np.any(box.coords == 0.0)

    def test_nyquist_wavenumber_is_positive(self):
        box = BoxSpec(n=8, L=2.0 * math.pi)
        assert box.k[4] == 4.0
        assert box.k_odd[4] == 0.0


class TestSpectralField3D:

    def test_non_hermitian_coefficients_are_rejected(self, monkeypatch):
        monkeypatch.setattr(settings, "CHECK_HERMITIAN", True)
        coeffs = np.zeros((8, 8, 8), dtype=complex)
        coeffs[1, 0, 0] = 1.0
        with pytest.raises(ValidationError):
            SpectralField3D(box=BoxSpec(n=8, L=1.0), coeffs=coeffs)

    def test_coefficients_are_read_only(self, rng):
        field = _random_field(rng)
        with pytest.raises(ValueError):
            field.coeffs[0, 0, 0] = 1.0

    def test_physical_round_trip(self, rng):
        box = BoxSpec(n=8, L=3.0)
        values = rng.normal(size=(8, 8, 8))
        np.testing.assert_allclose(SpectralField3D.from_physical(box, values).to_physical(), values, atol=1e-13)

    def test_plancherel(self, rng):
        field = _random_field(rng)
        assert l2_norm(field) == pytest.approx(lp_norm(field, 2), rel=1e-12)


class TestMultipliers:

    def test_riesz_trace_is_identity(self, rng):
        f = _random_field(rng)
        trace = riesz(f, 0, 0) + riesz(f, 1, 1) + riesz(f, 2, 2)
        np.testing.assert_allclose(trace.to_physical(), f.to_physical(), atol=1e-12)

    def test_riesz_on_a_single_mode(self):
        f = _cos_x1()
        np.testing.assert_allclose(riesz(f, 0, 0).to_physical(), f.to_physical(), atol=1e-12)
        np.testing.assert_allclose(riesz(f, 0, 1).to_physical(), 0.0, atol=1e-12)
        np.testing.assert_allclose(riesz(f, 2, 2).to_physical(), 0.0, atol=1e-12)

    def test_riesz_commutes_with_derivatives(self, rng):
        f = _random_field(rng)
        a = riesz(derivative(f, 2), 0, 1).to_physical()
        b = derivative(riesz(f, 0, 1), 2).to_physical()
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_inverse_laplacian_inverts_laplacian(self, rng):
        f = _random_field(rng)
        np.testing.assert_allclose(laplacian(inverse_laplacian(f)).to_physical(), f.to_physical(), atol=1e-12)

    def test_nonzero_mean_is_rejected(self, rng):
        box = BoxSpec(n=8, L=1.0)
        f = SpectralField3D.from_physical(box, 1.0 + rng.normal(size=(8, 8, 8)))
        with pytest.raises(MeanModeError) as excinfo:
            inverse_laplacian(f)
        assert excinfo.value.exit_code == 2

    def test_heat_damps_a_mode_at_its_rate(self):
        f = _cos_x1()
        np.testing.assert_allclose(heat(f, 0.5).to_physical(), math.exp(-0.5) * f.to_physical(), atol=1e-13)


class TestAxisymmetricOperators:

    def test_non_axisymmetric_input_is_rejected(self):
        box = BoxSpec(n=8, L=4.0)
        x1, x2, x3 = box.positions()
        values = x1 * np.exp(-(x1 ** 2 + x2 ** 2 + x3 ** 2))
        with pytest.raises(AxisymmetryError):
            dr_over_r_inv_laplacian(SpectralField3D.from_physical(box, values))

    def test_sampled_profile_is_mean_free(self):
        box = BoxSpec(n=16, L=8.0)
        field, mean = sample_axisymmetric(box, lambda r, z: np.exp(-r ** 2 - z ** 2))
        assert mean > 0.0
        assert abs(field.mean) < 1e-14

    def test_balanced_profile_has_tiny_mean(self):
        _, mean = sample_axisymmetric(BoxSpec(n=32, L=12.0), balanced_profile())
        assert abs(mean) < 1e-8

    def test_meridian_route_on_closed_form(self):
        # g = e^-r^2 cos z: Delta g = (4 r^2 - 5) g and (d_r / r) g = -2 g
        grid = make_grid(128, 32, 6.0, 2.0 * math.pi)
        f = sample(grid, lambda r, z: (4 * r ** 2 - 5) * np.exp(-r ** 2) * np.cos(z), Parity.EVEN)
        exact = sample(grid, lambda r, z: -2.0 * np.exp(-r ** 2) * np.cos(z), Parity.EVEN)
        result = meridian_dr_over_r_inv_laplacian(f)
        assert meridian_lp_norm(result - exact) / meridian_lp_norm(exact) < 1e-2

    def test_meridian_route_needs_an_even_field(self, grid):
        odd = sample(grid, lambda r, z: r * np.exp(-r ** 2) + 0.0 * z, Parity.ODD)
        with pytest.raises(ValueError):
            meridian_dr_over_r_inv_laplacian(odd)


class TestKernelConstants:

    def test_normalized_constants_cancel_the_isotropic_kernel(self):
        constants = KernelConstants.normalized()
        assert abs(constants.c1 - constants.k1_factor * 1j * constants.gamma1) < 1e-15

    def test_constants_assemble_a_real_operator(self):
        for constants in (KernelConstants.normalized(), KernelConstants.published()):
            assert abs((1j * constants.gamma1).imag) < 1e-15


class TestSYBound:

    def test_zero_source_is_vacuous(self):
        report = check_sy_bound(np.zeros((6, 6, 6)), np.zeros((6, 6, 6)), 0.5)
        assert report.vacuous
        assert report.valid_points == 0

    def test_ratio_is_scale_invariant(self, rng):
        source = rng.normal(size=(6, 6, 6))
        ur = rng.normal(size=(6, 6, 6))
        a = check_sy_bound(source, ur, 0.5)
        b = check_sy_bound(3.0 * source, 3.0 * ur, 0.5)
        assert not a.vacuous
        assert b.max_ratio == pytest.approx(a.max_ratio, rel=1e-12)

    def test_ring_ratio_is_stable_under_refinement(self):
        coarse = ring_sy_bound(n=16, box_size=8.0)
        fine = ring_sy_bound(n=32, box_size=8.0)
        assert not coarse.vacuous and not fine.vacuous
        assert fine.valid_points == 32 ** 3
        assert 0.0 < fine.max_ratio < math.inf
        assert abs(fine.max_ratio - coarse.max_ratio) <= 0.25 * coarse.max_ratio


class TestHarness:

    def test_unknown_inequality(self):
        with pytest.raises(ValueError):
            harmonic_harness("nope")

    def test_random_profiles_are_reproducible(self):
        r = np.linspace(0.0, 2.0, 5)
        np.testing.assert_array_equal(random_vortex_profile(7)(r, 0.3), random_vortex_profile(7)(r, 0.3))

    def test_harness_rows_are_finite(self):
        report = harmonic_harness("prop1-2", samples=3, seed=0, n=16, box_size=12.0)
        assert report.finite
        assert len(report.rows) + report.skipped == 3
        assert all(row.ratio >= 0.0 for row in report.rows)
        assert report.max_ratio == max(row.ratio for row in report.rows)


@pytest.mark.slow
class TestIdentityRoutes:

    def test_identity_matches_streamfunction_route(self):
        report = identity_check(n=32, box_size=12.0, profile="balanced")
        assert report.relative_l2_error < 5e-2
        assert report.core_relative_l2_error < 5e-2

    def test_identity_converges_as_the_box_grows(self):
        study = identity_study((32, 64, 128))
        assert [level.box_size for level in study.levels] == [12.0, 24.0, 48.0]
        assert study.monotone
        assert study.finest_error <= 1e-3

    def test_kernel_sum_matches_free_space_route(self):
        report = kernel_check(n=16, box_size=8.0, sigma=1.25)
        assert not report.residue_flagged
        assert report.relative_l2_error < 0.05

    def test_published_constants_do_not_match(self):
        report = kernel_check(constants=KernelConstants.published())
        assert report.relative_l2_error > 1.0


@pytest.mark.slow
class TestHarmonicHarnesses:

    @pytest.mark.parametrize("which", ["prop27", "ansitro", "qianru"])
    def test_ratios_are_finite_and_stable(self, which):
        report = harmonic_harness(which, samples=3, seed=0, n=32, box_size=12.0)
        assert report.finite
        assert report.stable
        assert report.max_ratio > 0.0
