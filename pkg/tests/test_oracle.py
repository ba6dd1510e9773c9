"""
Tests for the reference oracles themselves.
"""

import math

import numpy as np
import pytest
from scipy.special import dawsn, erf

from app.core.errors import OracleSizeError
from app.services.lab.fields import make_grid
from app.services.lab.oracle import (
    ManufacturedSolution,
    SingularKernel,
    central_difference,
    dense_poisson,
    direct_convolution,
    fourier_second_derivative_matrix,
    lattice_constant,
    lattice_convolution,
    quadrature_norm,
)

# regularized sum of 1/|m| over the simple cubic lattice
INVERSE_DISTANCE_CONSTANT = -2.8372974794806


class TestManufacturedSolution:

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_symbolic_forcing_matches_finite_differences(self, seed):
        solution = ManufacturedSolution.decaying_mode()
        assert solution.verify_forcing(seed=seed) < 1e-6

    def test_fields_have_axis_parity(self, grid):
        solution = ManufacturedSolution.decaying_mode()
        r, z = grid.mesh()
        # omega* = r e^-r^2 (9 - 4 r^2) sin z at t = 0, linear at the axis
        omega = solution.omega(grid, 0.0).values
        assert np.all(np.abs(omega[0]) <= 10.0 * r[0, 0])
        np.testing.assert_allclose(solution.rho(grid, 0.0).values, np.exp(-r ** 2) * np.cos(z))

    def test_forcing_callables_sample_the_grid(self, grid):
        f_omega, f_rho = ManufacturedSolution.decaying_mode().forcing(grid)
        assert f_omega(0.3).shape == (grid.nr, grid.nz)
        assert np.all(np.isfinite(f_rho(0.3)))


class TestDensePoisson:

    def test_size_guard(self):
        solution = ManufacturedSolution.decaying_mode()
        big = make_grid(32, 16, 6.0, 2.0 * math.pi)
        with pytest.raises(OracleSizeError):
            dense_poisson(solution.omega(big, 0.0))

    def test_fourier_matrix_differentiates_twice(self):
        n = 16
        z = np.arange(n) * 2.0 * np.pi / n
        matrix = fourier_second_derivative_matrix(n, 2.0 * np.pi)
        np.testing.assert_allclose(matrix @ np.sin(3 * z), -9.0 * np.sin(3 * z), atol=1e-11)

    def test_fourier_matrix_scales_with_period(self):
        n = 8
        z = np.arange(n) * 4.0 / n
        matrix = fourier_second_derivative_matrix(n, 4.0)
        k = 2.0 * np.pi / 4.0
        np.testing.assert_allclose(matrix @ np.cos(k * z), -k ** 2 * np.cos(k * z), atol=1e-12)


class TestQuadratureNorm:

    def test_gaussian_l2_norm(self):
        # |e^{-r^2}|_2^2 over [0, 5] x [0, 2) = 2 pi * 2 * (1 - e^{-50}) / 4
        result = quadrature_norm(lambda r, z: np.exp(-r ** 2) + 0.0 * z, 2, R=5.0, Lz=2.0, panels=2048)
        assert result.converged
        assert result.value == pytest.approx(math.sqrt(math.pi), rel=1e-9)

    def test_sup_norm(self):
        result = quadrature_norm(lambda r, z: np.exp(-r ** 2) + 0.0 * z, math.inf, R=5.0, Lz=2.0, panels=2048)
        assert result.value == pytest.approx(1.0, abs=1e-5)


class TestDirectConvolution:

    def test_size_guard(self):
        with pytest.raises(OracleSizeError):
            direct_convolution(lambda a, b, c: a, np.zeros((32, 32, 32)), 0.1)

    def test_constant_kernel_sums_every_other_cell(self, rng):
        samples = rng.normal(size=(4, 4, 4))
        h = 0.5
        out = direct_convolution(lambda a, b, c: np.ones_like(a), samples, h)
        expected = h ** 3 * (samples.sum() - samples)
        np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-14)

    def test_single_cell_source_reproduces_kernel(self):
        n, h = 5, 1.0
        samples = np.zeros((n, n, n))
        samples[2, 2, 2] = 1.0
        out = direct_convolution(lambda a, b, c: a + 2.0 * b + 3.0 * c, samples, h)
        x = (np.arange(n) - 2) * h
        expected = x[:, None, None] + 2.0 * x[None, :, None] + 3.0 * x[None, None, :]
        np.testing.assert_allclose(out, expected, atol=1e-12)


def _norm(y1, y2, y3):
    return np.sqrt(y1 ** 2 + y2 ** 2 + y3 ** 2)


def _gaussian_box(n=24, L=6.0):
    h = L / n
    x = -L / 2 + (np.arange(n) + 0.5) * h
    x1, x2, x3 = np.meshgrid(x, x, x, indexing="ij")
    return h, x1, x2, x3, np.exp(-(x1 ** 2 + x2 ** 2 + x3 ** 2))


def _relative(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


class TestLatticeConvolution:

    def test_matches_the_direct_sum(self, rng):
        samples = rng.normal(size=(6, 6, 6))
        kernel = lambda a, b, c: 1.0 / _norm(a, b, c)
        np.testing.assert_allclose(lattice_convolution(kernel, samples, 0.5),
                                   direct_convolution(kernel, samples, 0.5), rtol=1e-10, atol=1e-12)

    def test_runs_beyond_the_direct_limit(self):
        n, h = 32, 0.25
        samples = np.zeros((n, n, n))
        samples[16, 16, 16] = 1.0
        out = lattice_convolution(lambda a, b, c: 1.0 / _norm(a, b, c), samples, h)
        assert out.shape == (n, n, n)
        assert out[16, 16, 20] == pytest.approx(h ** 3 / (4 * h), rel=1e-8)
        assert abs(out[16, 16, 16]) < 1e-12


class TestLatticeConstants:

    def test_inverse_distance(self):
        assert lattice_constant(lambda a, b, c: 1.0 / _norm(a, b, c), -1) == pytest.approx(
            INVERSE_DISTANCE_CONSTANT, rel=1e-4)

    def test_cubic_symmetry_splits_the_constant(self):
        third = lattice_constant(lambda a, b, c: c ** 2 / _norm(a, b, c) ** 3, -1)
        whole = lattice_constant(lambda a, b, c: 1.0 / _norm(a, b, c), -1)
        assert third == pytest.approx(whole / 3.0, rel=1e-9)

    def test_odd_kernel_has_no_constant(self):
        assert abs(lattice_constant(lambda a, b, c: c / _norm(a, b, c) ** 3, -2)) < 1e-9

    def test_non_integrable_degree_is_rejected(self):
        with pytest.raises(ValueError):
            lattice_constant(lambda a, b, c: 1.0 / _norm(a, b, c) ** 3, -3)


class TestSingularKernel:

    def test_central_difference_is_fourth_order(self):
        n = 64
        h = 2.0 * math.pi / n
        x = np.arange(n) * h
        samples = np.broadcast_to(np.sin(x)[None, :, None], (4, n, 4)).copy()
        derivative = central_difference(samples, h, axis=1)
        np.testing.assert_allclose(derivative[:, 2:-2], np.broadcast_to(np.cos(x)[None, 2:-2, None], (4, n - 4, 4)),
                                   atol=1e-5)

    def test_dipole_moments(self):
        kernel = SingularKernel("dipole", lambda a, b, c: c / _norm(a, b, c) ** 3, degree=-2)
        z = kernel.moments
        assert np.all(np.abs(z[:3]) < 1e-9)
        assert z[3] == pytest.approx(INVERSE_DISTANCE_CONSTANT / 3.0, rel=1e-4)

    def test_inverse_square_against_closed_form(self):
        # (1/|x|^2) * exp(-|x|^2) = 2 pi^(3/2) D(a) / a with D the Dawson integral, a = |x|
        h, x1, x2, x3, samples = _gaussian_box()
        a = _norm(x1, x2, x3)
        exact = 2.0 * math.pi ** 1.5 * dawsn(a) / a
        kernel = SingularKernel("inverse square", lambda p, q, r: 1.0 / _norm(p, q, r) ** 2, degree=-2)

        raw = _relative(direct_convolution(kernel, samples, h), exact)
        corrected = _relative(kernel.convolve(samples, h), exact)
        fast = _relative(kernel.convolve(samples, h, direct=False), exact)

        assert raw > 0.05
        assert corrected < 1e-2
        assert fast == pytest.approx(corrected, rel=1e-6)

    def test_dipole_against_closed_form(self):
        # x3/|x|^3 * exp(-|x|^2) = -d_3 [pi^(3/2) erf(a) / a]
        h, x1, x2, x3, samples = _gaussian_box()
        a = _norm(x1, x2, x3)
        radial = math.pi ** 1.5 * (2.0 / math.sqrt(math.pi) * np.exp(-a ** 2) / a - erf(a) / a ** 2)
        exact = -(x3 / a) * radial
        kernel = SingularKernel("dipole", lambda p, q, r: r / _norm(p, q, r) ** 3, degree=-2)

        raw = _relative(direct_convolution(kernel, samples, h), exact)
        corrected = _relative(kernel.convolve(samples, h), exact)

        assert corrected < 0.5 * raw
        assert corrected < 1e-2

    def test_non_integrable_kernel_is_rejected(self):
        with pytest.raises(ValueError):
            SingularKernel("too singular", lambda a, b, c: 1.0 / _norm(a, b, c) ** 3, degree=-3)
