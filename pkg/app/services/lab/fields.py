"""
Meridian Fields

Cell-centered (r, z) grids, axisymmetric scalar storage with axis parity,
cylindrical-measure norms, finite-difference operators in r, spectral
operators in z, and the AXBQ binary snapshot format.

Conventions:
    values are indexed (i, j) with i along r and j along z
    r_i = (i + 1/2) R / nr never touches the axis
    z_j = j Lz / nz is periodic with period Lz
"""

import enum
import logging
import math
import struct
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import fft as sfft

from app.core.config import settings
from app.core.errors import GridError, GridMismatchError, NonFiniteFieldError
from app.services.lab.tridiagonal import BandedOperator

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"AXBQ"
SNAPSHOT_VERSION = 1
_SNAPSHOT_HEADER = struct.Struct("<4sIIIddd")


class Parity(str, enum.Enum):
    """Behavior of a field under r -> -r."""

    EVEN = "even"
    ODD = "odd"

    @property
    def sign(self) -> float:
        return 1.0 if self is Parity.EVEN else -1.0

    def flipped(self) -> "Parity":
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN


class Boundary(str, enum.Enum):
    """Outer-wall condition at r = R (imposed on the face, via a ghost cell)."""

    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"

    @property
    def ghost_sign(self) -> float:
        return -1.0 if self is Boundary.DIRICHLET else 1.0

    @classmethod
    def default_for(cls, parity: Parity) -> "Boundary":
        # omega (odd) vanishes at the wall; rho (even) has no flux through it
        return cls.DIRICHLET if parity is Parity.ODD else cls.NEUMANN


# =============================================================================
# Grid
# =============================================================================

class MeridianGrid(BaseModel):
    """Cell-centered meridian grid on [0, R] x [0, Lz).

    Attributes:
        nr: radial node count (>= 4)
        nz: vertical node count (>= 4, power of 2)
        R: radial extent
        Lz: vertical period
    """
    model_config = ConfigDict(frozen=True)

    nr: int
    nz: int
    R: float
    Lz: float

    @model_validator(mode="after")
    def _check_extents(self) -> "MeridianGrid":
        if self.nr < 4:
            raise GridError(f"nr must be >= 4, got {self.nr}")
        if self.nz < 4 or self.nz & (self.nz - 1):
            raise GridError(f"nz must be a power of 2 and >= 4, got {self.nz}")
        if not (self.R > 0 and self.Lz > 0) or not (math.isfinite(self.R) and math.isfinite(self.Lz)):
            raise GridError(f"extents must be positive and finite, got R={self.R}, Lz={self.Lz}")
        return self

    @property
    def dr(self) -> float:
        return self.R / self.nr

    @property
    def dz(self) -> float:
        return self.Lz / self.nz

    @property
    def r_nodes(self) -> np.ndarray:
        return (np.arange(self.nr) + 0.5) * self.dr

    @property
    def r_faces(self) -> np.ndarray:
        """Face radii r_{i+1/2} for i = -1 .. nr-1 (length nr + 1, first is the axis)."""
        return np.arange(self.nr + 1) * self.dr

    @property
    def z_nodes(self) -> np.ndarray:
        return np.arange(self.nz) * self.dz

    @property
    def kz(self) -> np.ndarray:
        """Nonnegative z wavenumbers of the real transform (length nz // 2 + 1)."""
        return (2.0 * np.pi / self.Lz) * np.arange(self.nz // 2 + 1)

    @property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask over the real-transform modes."""
        return np.arange(self.nz // 2 + 1) <= self.nz / 3.0

    @property
    def weights(self) -> np.ndarray:
        """Cylindrical quadrature weights 2 pi r_i dr dz, shape (nr, 1)."""
        return (2.0 * np.pi * self.dr * self.dz * self.r_nodes)[:, None]

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r_nodes, self.z_nodes, indexing="ij")


def make_grid(nr: int, nz: int, R: float, Lz: float) -> MeridianGrid:
    """Build a validated meridian grid (raises GridError on bad parameters)."""
    return MeridianGrid(nr=nr, nz=nz, R=R, Lz=Lz)


# =============================================================================
# Fields
# =============================================================================

class ScalarField2D(BaseModel):
    """Axisymmetric scalar sampled on a meridian grid.

    Values are read-only after construction; every operator returns a new field.

    Attributes:
        grid: the meridian grid
        values: real samples, shape (nr, nz)
        parity: axis parity used by the derivative stencils
        label: name used in error messages
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: MeridianGrid
    values: np.ndarray
    parity: Parity
    label: str = "field"

    @field_validator("values", mode="before")
    @classmethod
    def _as_float_array(cls, v):
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def _check_values(self) -> "ScalarField2D":
        shape = (self.grid.nr, self.grid.nz)
        if self.values.shape != shape:
            raise GridMismatchError(
                f"field '{self.label}' has shape {self.values.shape}, grid expects {shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteFieldError(self.label)
        self.values.flags.writeable = False
        return self

    def with_values(self, values: np.ndarray, parity: Optional[Parity] = None,
                    label: Optional[str] = None) -> "ScalarField2D":
        return ScalarField2D(
            grid=self.grid,
            values=values,
            parity=self.parity if parity is None else parity,
            label=self.label if label is None else label,
        )

    def _operand(self, other: "ScalarField2D") -> np.ndarray:
        check_same_grid(self, other)
        if other.parity is not self.parity:
            raise ValueError(f"parity mismatch: {self.parity.value} vs {other.parity.value}")
        return other.values

    def __add__(self, other: "ScalarField2D") -> "ScalarField2D":
        return self.with_values(self.values + self._operand(other))

    def __sub__(self, other: "ScalarField2D") -> "ScalarField2D":
        return self.with_values(self.values - self._operand(other))

    def __mul__(self, scale: float) -> "ScalarField2D":
        return self.with_values(self.values * float(scale))

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField2D":
        return self.with_values(-self.values)


class VelocityField2D(BaseModel):
    """Meridian velocity (u^r odd, u^z even) on one grid."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ur: ScalarField2D
    uz: ScalarField2D

    @model_validator(mode="after")
    def _check_pair(self) -> "VelocityField2D":
        check_same_grid(self.ur, self.uz)
        if self.ur.parity is not Parity.ODD or self.uz.parity is not Parity.EVEN:
            raise ValueError("velocity requires u^r odd and u^z even")
        return self

    @property
    def grid(self) -> MeridianGrid:
        return self.ur.grid

    @classmethod
    def zero(cls, grid: MeridianGrid) -> "VelocityField2D":
        return cls(ur=zeros(grid, Parity.ODD, "ur"), uz=zeros(grid, Parity.EVEN, "uz"))


def check_same_grid(*fields: ScalarField2D) -> MeridianGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"field '{f.label}' lives on {f.grid}, expected {grid}")
    return grid


def sample(grid: MeridianGrid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
           parity: Parity, label: str = "field") -> ScalarField2D:
    """Sample fn(r, z) at the grid nodes."""
    r, z = grid.mesh()
    values = np.broadcast_to(np.asarray(fn(r, z), dtype=float), r.shape).copy()
    return ScalarField2D(grid=grid, values=values, parity=parity, label=label)


def zeros(grid: MeridianGrid, parity: Parity, label: str = "field") -> ScalarField2D:
    return ScalarField2D(grid=grid, values=np.zeros((grid.nr, grid.nz)), parity=parity, label=label)


# =============================================================================
# Norms
# =============================================================================

def lp_norm(f: ScalarField2D, p: Union[float, int] = 2) -> float:
    """Cylindrical L^p norm (sum |f|^p 2 pi r dr dz)^(1/p); p = inf gives max |f|."""
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"exponent must lie in [1, inf], got {p}")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    if p == 2.0:
        return math.sqrt(inner(f, f))
    return float(np.sum(f.grid.weights * a ** p) ** (1.0 / p))


def inner(f: ScalarField2D, g: ScalarField2D) -> float:
    """Weighted inner product with the same weights as lp_norm."""
    check_same_grid(f, g)
    return float(np.sum(f.grid.weights * f.values * g.values))


# =============================================================================
# Operators
# =============================================================================

def d_r(f: ScalarField2D) -> ScalarField2D:
    """Centered radial derivative; parity ghost at the axis, one-sided at r = R."""
    v = f.values
    h = f.grid.dr
    out = np.empty_like(v)
    ghost = f.parity.sign * v[0]
    out[0] = (v[1] - ghost) / (2.0 * h)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return f.with_values(out, parity=f.parity.flipped())


def spectral_dz(values: np.ndarray, grid: MeridianGrid, order: int = 1) -> np.ndarray:
    """Spectral z derivative of raw samples. Odd orders zero the Nyquist mode."""
    coeffs = sfft.rfft(values, axis=-1, workers=settings.fft_workers)
    symbol = (1j * grid.kz) ** order
    if order % 2:
        symbol[-1] = 0.0
    return sfft.irfft(coeffs * symbol, n=grid.nz, axis=-1, workers=settings.fft_workers)


def d_z(f: ScalarField2D) -> ScalarField2D:
    return f.with_values(spectral_dz(f.values, f.grid))


def dealias(f: ScalarField2D) -> ScalarField2D:
    return f.with_values(dealias_values(f.values, f.grid))


def dealias_values(values: np.ndarray, grid: MeridianGrid) -> np.ndarray:
    coeffs = sfft.rfft(values, axis=-1, workers=settings.fft_workers)
    coeffs[..., ~grid.dealias_mask] = 0.0
    return sfft.irfft(coeffs, n=grid.nz, axis=-1, workers=settings.fft_workers)


@lru_cache(maxsize=64)
def radial_laplacian(grid: MeridianGrid, outer: Boundary, shift_inverse_r2: bool = False) -> BandedOperator:
    """Conservative stencil of Delta_h (optionally Delta_h - 1/r^2).

    Row i: (1/r_i) [r_{i+1/2}(f_{i+1} - f_i) - r_{i-1/2}(f_i - f_{i-1})] / dr^2.
    The axis face has r_{-1/2} = 0, so the axis ghost never enters.
    """
    r = grid.r_nodes
    faces = grid.r_faces
    h2 = grid.dr ** 2
    lower = faces[:-1] / (r * h2)
    upper = faces[1:] / (r * h2)
    diag = -(lower + upper)
    lower[0] = 0.0
    diag[-1] += outer.ghost_sign * upper[-1]
    upper[-1] = 0.0
    if shift_inverse_r2:
        diag = diag - 1.0 / r ** 2
    return BandedOperator(lower, diag, upper)


def laplacian_h(f: ScalarField2D, outer: Optional[Boundary] = None) -> ScalarField2D:
    """Horizontal Laplacian d_rr + (1/r) d_r in conservative form."""
    outer = Boundary.default_for(f.parity) if outer is None else outer
    op = radial_laplacian(f.grid, outer)
    return f.with_values(op.apply(f.values))


# =============================================================================
# Snapshots
# =============================================================================

def write_snapshot(path: Union[str, Path], t: float, omega: ScalarField2D, rho: ScalarField2D) -> Path:
    """Write (t, omega, rho) in the AXBQ binary format."""
    grid = check_same_grid(omega, rho)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.nr, grid.nz, grid.R, grid.Lz, t)
    with path.open("wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(omega.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(rho.values, dtype="<f8").tobytes())
    logger.debug(f"Snapshot written to {path} (t={t})")
    return path


def read_snapshot(path: Union[str, Path]) -> Tuple[float, ScalarField2D, ScalarField2D]:
    """Load an AXBQ snapshot; returns (t, omega, rho)."""
    data = Path(path).read_bytes()
    magic, version, nr, nz, R, Lz, t = _SNAPSHOT_HEADER.unpack_from(data, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not an AXBQ snapshot (magic {magic!r})")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    grid = make_grid(nr, nz, R, Lz)
    count = nr * nz
    body = np.frombuffer(data, dtype="<f8", offset=_SNAPSHOT_HEADER.size, count=2 * count)
    omega = ScalarField2D(grid=grid, values=body[:count].reshape(nr, nz).astype(float),
                          parity=Parity.ODD, label="omega")
    rho = ScalarField2D(grid=grid, values=body[count:].reshape(nr, nz).astype(float),
                        parity=Parity.EVEN, label="rho")
    return t, omega, rho
