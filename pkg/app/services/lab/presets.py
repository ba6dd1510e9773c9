"""
Initial-Data Presets

Swirl-free axisymmetric initial data: zero, a Gaussian density bubble, a
Gaussian vortex ring, or both. Off-axis profiles are symmetrized in r so the
axis parity of each field holds exactly.
"""

import logging

import numpy as np

from app.models.schemas import InitSection
from app.services.lab.fields import MeridianGrid, Parity, sample, zeros

logger = logging.getLogger(__name__)


def _radial_profile(r: np.ndarray, r0: float, sigma: float) -> np.ndarray:
    return 0.5 * (np.exp(-((r - r0) / sigma) ** 2) + np.exp(-((r + r0) / sigma) ** 2))


def _vertical_profile(z: np.ndarray, z0: float, sigma: float) -> np.ndarray:
    return np.exp(-((z - z0) / sigma) ** 2)


def density_bubble(grid: MeridianGrid, r0: float = 0.0, z0=None, sigma: float = 1.0, amplitude: float = 1.0):
    """rho0 = A exp(-(r^2 + (z - z0)^2) / sigma^2) for r0 = 0."""
    z0 = grid.Lz / 2 if z0 is None else z0
    return sample(grid, lambda r, z: amplitude * _radial_profile(r, r0, sigma) * _vertical_profile(z, z0, sigma),
                  Parity.EVEN, "rho")


def vortex_ring(grid: MeridianGrid, r0: float = 0.0, z0=None, sigma: float = 1.0, amplitude: float = 1.0):
    """omega0 = A r exp(-(r^2 + (z - z0)^2) / sigma^2) for r0 = 0."""
    z0 = grid.Lz / 2 if z0 is None else z0
    return sample(grid, lambda r, z: amplitude * r * _radial_profile(r, r0, sigma) * _vertical_profile(z, z0, sigma),
                  Parity.ODD, "omega")


def initial_fields(grid: MeridianGrid, init: InitSection):
    """(omega0, rho0) for a preset."""
    params = dict(r0=init.r0, z0=init.z0, sigma=init.sigma, amplitude=init.amplitude)
    omega = zeros(grid, Parity.ODD, "omega")
    rho = zeros(grid, Parity.EVEN, "rho")
    if init.kind in ("density_bubble", "combined"):
        rho = density_bubble(grid, **params)
    if init.kind in ("vortex_ring", "combined"):
        omega = vortex_ring(grid, **params)
    wall = max(float(np.max(np.abs(omega.values[-1]))), float(np.max(np.abs(rho.values[-1]))))
    if wall > 1e-8:
        logger.warning(f"Initial data is {wall:.2e} at the outer wall; consider a larger R")
    logger.info(f"Initial data: kind={init.kind}, sigma={init.sigma}, amplitude={init.amplitude}")
    return omega, rho
