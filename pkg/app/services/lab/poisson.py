"""
Streamfunction Solver

Discrete Biot-Savart law in the meridian plane. The Stokes streamfunction
solves

    (d_rr - (1/r) d_r + d_zz) psi = -r omega,   psi = 0 at r = R,

with u^r = -(1/r) d_z psi and u^z = (1/r) d_r psi.

The systems are assembled for the azimuthal potential chi = psi / r, for
which the operator becomes r (Delta_h - 1/r^2 + d_zz) chi. After a real
transform in z every wavenumber k gives one tridiagonal system in r for
Delta_h - 1/r^2 - k^2, strictly diagonally dominant for every k. psi is
even at the axis (psi ~ r^2).
"""

import logging
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import fft as sfft

from app.core.config import settings
from app.services.lab.fields import (
    Boundary,
    MeridianGrid,
    Parity,
    ScalarField2D,
    VelocityField2D,
    check_same_grid,
    d_r,
    radial_laplacian,
    spectral_dz,
)

logger = logging.getLogger(__name__)


class StreamSolveWorkspace:
    """Per-wavenumber tridiagonal factorizations for one grid.

    Immutable after construction; solves for different wavenumbers never
    interact, so results do not depend on evaluation order.
    """

    def __init__(self, grid: MeridianGrid):
        self.grid = grid
        potential = radial_laplacian(grid, Boundary.DIRICHLET, shift_inverse_r2=True)
        self.operator = potential.batched(-grid.kz ** 2)
        self.factorization = self.operator.factorize()
        logger.info(
            f"Streamfunction workspace ready: {self.factorization_count} wavenumbers, "
            f"nr={grid.nr}, min pivot {self.factorization.min_pivot:.3e}"
        )

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.grid.kz

    @property
    def factorization_count(self) -> int:
        return self.operator.diag.shape[1]

    def solve_values(self, omega_values: np.ndarray) -> np.ndarray:
        """psi samples for raw omega samples."""
        rhs = sfft.rfft(-omega_values, axis=1, workers=settings.fft_workers)
        chi_hat = self.factorization.solve(rhs)
        chi = sfft.irfft(chi_hat, n=self.grid.nz, axis=1, workers=settings.fft_workers)
        return self.grid.r_nodes[:, None] * chi

    def apply_values(self, psi_values: np.ndarray) -> np.ndarray:
        """The discrete operator L applied to raw psi samples."""
        r = self.grid.r_nodes[:, None]
        chi_hat = sfft.rfft(psi_values / r, axis=1, workers=settings.fft_workers)
        out = sfft.irfft(self.operator.apply(chi_hat), n=self.grid.nz, axis=1,
                         workers=settings.fft_workers)
        return r * out


@lru_cache(maxsize=16)
def workspace_for(grid: MeridianGrid) -> StreamSolveWorkspace:
    return StreamSolveWorkspace(grid)


def solve_streamfunction(omega_theta: ScalarField2D,
                         workspace: Optional[StreamSolveWorkspace] = None) -> ScalarField2D:
    """Solve L psi = -r omega for the streamfunction.

    Args:
        omega_theta: azimuthal vorticity (odd parity)
        workspace: factorizations for the grid; a cached one is used if omitted

    Returns:
        psi, even parity, zero on the wall face
    """
    if omega_theta.parity is not Parity.ODD:
        raise ValueError("solve_streamfunction expects an odd vorticity field")
    workspace = workspace or workspace_for(omega_theta.grid)
    if workspace.grid != omega_theta.grid:
        raise ValueError("workspace was built for a different grid")
    psi = workspace.solve_values(omega_theta.values)
    return ScalarField2D(grid=omega_theta.grid, values=psi, parity=Parity.EVEN, label="psi")


def residual(psi: ScalarField2D, omega_theta: ScalarField2D,
             workspace: Optional[StreamSolveWorkspace] = None) -> float:
    """Relative max-norm residual of L psi + r omega."""
    grid = check_same_grid(psi, omega_theta)
    workspace = workspace or workspace_for(grid)
    source = grid.r_nodes[:, None] * omega_theta.values
    scale = max(float(np.max(np.abs(source))), np.finfo(float).tiny)
    return float(np.max(np.abs(workspace.apply_values(psi.values) + source))) / scale


def velocity_from_streamfunction(psi: ScalarField2D) -> VelocityField2D:
    """u^r = -(1/r) d_z psi, u^z = (1/r) d_r psi."""
    r = psi.grid.r_nodes[:, None]
    ur = -spectral_dz(psi.values, psi.grid) / r
    uz = d_r(psi).values / r
    return VelocityField2D(
        ur=ScalarField2D(grid=psi.grid, values=ur, parity=Parity.ODD, label="ur"),
        uz=ScalarField2D(grid=psi.grid, values=uz, parity=Parity.EVEN, label="uz"),
    )


def velocity_from_vorticity(omega_theta: ScalarField2D,
                            workspace: Optional[StreamSolveWorkspace] = None) -> VelocityField2D:
    return velocity_from_streamfunction(solve_streamfunction(omega_theta, workspace))


def ur_over_r(velocity: VelocityField2D) -> ScalarField2D:
    r = velocity.grid.r_nodes[:, None]
    return velocity.ur.with_values(velocity.ur.values / r, parity=Parity.EVEN, label="ur_over_r")


def divergence(velocity: VelocityField2D) -> ScalarField2D:
    """Discrete cylindrical divergence (1/r) D_r(r u^r) + D_z u^z."""
    grid = velocity.grid
    r = grid.r_nodes[:, None]
    flux = ScalarField2D(grid=grid, values=r * velocity.ur.values, parity=Parity.EVEN, label="r_ur")
    out = d_r(flux).values / r + spectral_dz(velocity.uz.values, grid)
    return ScalarField2D(grid=grid, values=out, parity=Parity.EVEN, label="divergence")


def curl(velocity: VelocityField2D) -> ScalarField2D:
    """Azimuthal vorticity D_z u^r - D_r u^z."""
    out = spectral_dz(velocity.ur.values, velocity.grid) - d_r(velocity.uz).values
    return ScalarField2D(grid=velocity.grid, values=out, parity=Parity.ODD, label="omega")
