"""
Tests for the streamfunction solver and the derived velocity.
"""

import math

import numpy as np
import pytest

from app.services.lab.fields import Parity, lp_norm, make_grid, sample, zeros
from app.services.lab.oracle import ManufacturedSolution, dense_poisson
from app.services.lab.poisson import (
    StreamSolveWorkspace,
    divergence,
    residual,
    solve_streamfunction,
    ur_over_r,
    velocity_from_streamfunction,
    velocity_from_vorticity,
    workspace_for,
)


def _ring(grid):
    return sample(grid, lambda r, z: r * np.exp(-r ** 2) * (1.0 + np.sin(z)), Parity.ODD, "omega")


class TestSolveStreamfunction:

    def test_matches_dense_elimination(self, grid):
        omega = _ring(grid)
        psi = solve_streamfunction(omega)
        reference = dense_poisson(omega)
        assert psi.parity is Parity.EVEN
        np.testing.assert_allclose(psi.values, reference.values, rtol=1e-9, atol=1e-12)

    def test_matches_dense_elimination_on_smallest_grid(self):
        small = make_grid(8, 8, 3.0, 2.0 * math.pi)
        omega = _ring(small)
        psi = solve_streamfunction(omega).values
        reference = dense_poisson(omega).values
        assert float(np.max(np.abs(psi - reference))) <= 1e-10 * float(np.max(np.abs(reference)))

    def test_residual_is_at_round_off(self, grid):
        omega = _ring(grid)
        assert residual(solve_streamfunction(omega), omega) < 1e-10

    def test_zero_vorticity_gives_zero_streamfunction(self, grid):
        psi = solve_streamfunction(zeros(grid, Parity.ODD))
        np.testing.assert_array_equal(psi.values, 0.0)

    def test_even_vorticity_is_rejected(self, wavy_even):
        with pytest.raises(ValueError):
            solve_streamfunction(wavy_even)

    def test_workspace_for_other_grid_is_rejected(self, grid):
        other = StreamSolveWorkspace(make_grid(8, 16, 4.0, 2.0 * math.pi))
        with pytest.raises(ValueError):
            solve_streamfunction(_ring(grid), other)

    def test_one_factorization_per_wavenumber(self, grid):
        workspace = workspace_for(grid)
        assert workspace.factorization_count == grid.nz // 2 + 1
        assert workspace_for(grid) is workspace

    @pytest.mark.parametrize("nr", [32, 64])
    def test_second_order_against_closed_form(self, nr):
        solution = ManufacturedSolution.decaying_mode()
        coarse = make_grid(nr, 16, 6.0, 2.0 * math.pi)
        fine = make_grid(2 * nr, 16, 6.0, 2.0 * math.pi)

        def error(g):
            psi = solve_streamfunction(solution.omega(g, 0.0))
            exact = solution.psi(g, 0.0)
            return lp_norm(psi - exact) / lp_norm(exact)

        e_coarse, e_fine = error(coarse), error(fine)
        assert e_coarse < 5e-2
        assert e_fine < 0.35 * e_coarse


class TestVelocity:

    def test_parities(self, grid):
        velocity = velocity_from_vorticity(_ring(grid))
        assert velocity.ur.parity is Parity.ODD
        assert velocity.uz.parity is Parity.EVEN
        assert ur_over_r(velocity).parity is Parity.EVEN

    def test_discrete_velocity_is_divergence_free(self, tall_grid, ring):
        velocity = velocity_from_vorticity(ring)
        scale = float(np.max(np.abs(velocity.uz.values))) / tall_grid.dr
        assert float(np.max(np.abs(divergence(velocity).values))) <= 1e-10 * scale

    def test_velocity_matches_streamfunction_derivatives(self, grid):
        solution = ManufacturedSolution.decaying_mode()
        psi = solution.psi(grid, 0.0)
        velocity = velocity_from_streamfunction(psi)
        r, z = grid.mesh()
        # u^r = -(1/r) d_z psi is spectral in z, hence exact here
        expected_ur = -r * np.exp(-r ** 2) * np.cos(z)
        np.testing.assert_allclose(velocity.ur.values, expected_ur, atol=1e-10)
