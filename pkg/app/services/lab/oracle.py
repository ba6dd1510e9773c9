"""
Reference Oracles

Brute-force references for the main modules. None of them reuses the
numerical kernels they check:

    ManufacturedSolution   closed-form fields + symbolic forcing (sympy)
    dense_poisson          dense 2D operator, Fourier-matrix z part, LU solve
    quadrature_norm        Gauss-Legendre panels in r, periodic rule in z
    direct_convolution     O(n^6) midpoint sum, singular cell omitted
    lattice_convolution    the same punctured sum through FFT convolution
    SingularKernel         local lattice corrections of the punctured sum
"""

import logging
import math
from functools import cached_property, lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
import sympy as sp
from pydantic import BaseModel
from scipy.integrate import quad
from scipy.signal import fftconvolve

from app.core.errors import OracleSizeError, SingularSystemError
from app.services.lab.fields import MeridianGrid, Parity, ScalarField2D

logger = logging.getLogger(__name__)

R_SYM, Z_SYM, T_SYM = sp.symbols("r z t", real=True)

DENSE_POISSON_MAX_NODES = 16 * 16
DIRECT_CONVOLUTION_MAX_N = 24
LATTICE_RADIUS = 48
MOMENT_FLOOR = 1e-9


# =============================================================================
# Manufactured solutions
# =============================================================================

class ManufacturedSolution:
    """Closed-form (psi*, rho*) with omega* and the forcing derived symbolically.

    omega* = -(psi_rr - psi_r / r + psi_zz) / r, so the advecting velocity
    u^r = -psi_z / r, u^z = psi_r / r is closed-form as well.
    """

    def __init__(self, name: str, psi: sp.Expr, rho: sp.Expr):
        r, z, t = R_SYM, Z_SYM, T_SYM
        self.name = name
        self.psi_expr = psi
        self.rho_expr = rho
        self.omega_expr = -(sp.diff(psi, r, 2) - sp.diff(psi, r) / r + sp.diff(psi, z, 2)) / r

        ur = -sp.diff(psi, z) / r
        uz = sp.diff(psi, r) / r
        w = self.omega_expr
        self.forcing_omega_expr = (
            sp.diff(w, t) + ur * sp.diff(w, r) + uz * sp.diff(w, z)
            - (sp.diff(w, r, 2) + sp.diff(w, r) / r) + w / r ** 2
            + sp.diff(rho, r) - (ur / r) * w
        )
        self.forcing_rho_expr = (
            sp.diff(rho, t) + ur * sp.diff(rho, r) + uz * sp.diff(rho, z)
            - (sp.diff(rho, r, 2) + sp.diff(rho, r) / r)
        )

        args = (r, z, t)
        self._psi = sp.lambdify(args, psi, "numpy")
        self._rho = sp.lambdify(args, rho, "numpy")
        self._omega = sp.lambdify(args, w, "numpy")
        self._forcing_omega = sp.lambdify(args, self.forcing_omega_expr, "numpy")
        self._forcing_rho = sp.lambdify(args, self.forcing_rho_expr, "numpy")
        logger.debug(f"Manufactured solution '{name}' compiled")

    @classmethod
    def decaying_mode(cls, sigma: float = 1.0) -> "ManufacturedSolution":
        """psi* = e^-t r^2 e^(-r^2/sigma^2) sin z, rho* = e^-t e^(-r^2/sigma^2) cos z."""
        r, z, t = R_SYM, Z_SYM, T_SYM
        envelope = sp.exp(-r ** 2 / sp.Float(sigma) ** 2)
        return cls(
            name="decaying_mode",
            psi=sp.exp(-t) * r ** 2 * envelope * sp.sin(z),
            rho=sp.exp(-t) * envelope * sp.cos(z),
        )

    @staticmethod
    def _on_grid(fn: Callable, grid: MeridianGrid, t: float) -> np.ndarray:
        r, z = grid.mesh()
        return np.broadcast_to(np.asarray(fn(r, z, t), dtype=float), r.shape).copy()

    def omega(self, grid: MeridianGrid, t: float) -> ScalarField2D:
        return ScalarField2D(grid=grid, values=self._on_grid(self._omega, grid, t), parity=Parity.ODD, label="omega")

    def rho(self, grid: MeridianGrid, t: float) -> ScalarField2D:
        return ScalarField2D(grid=grid, values=self._on_grid(self._rho, grid, t), parity=Parity.EVEN, label="rho")

    def psi(self, grid: MeridianGrid, t: float) -> ScalarField2D:
        return ScalarField2D(grid=grid, values=self._on_grid(self._psi, grid, t), parity=Parity.EVEN, label="psi")

    def forcing(self, grid: MeridianGrid):
        """(F_omega(t), F_rho(t)) sampling callables for StepConfig."""
        return (
            lambda t: self._on_grid(self._forcing_omega, grid, t),
            lambda t: self._on_grid(self._forcing_rho, grid, t),
        )

    def verify_forcing(self, point: Optional[tuple] = None, seed: int = 0, h: float = 1e-3) -> float:
        """Relative disagreement between symbolic and finite-difference forcing at one point.

        Derivatives use 5-point central differences; the result is normalized
        by the sum of term magnitudes so cancellation cannot hide errors.
        """
        if point is None:
            rng = np.random.default_rng(seed)
            point = (rng.uniform(0.3, 1.5), rng.uniform(0.0, 2 * np.pi), rng.uniform(0.0, 1.0))
        r0, z0, t0 = (float(c) for c in point)

        def d1(fn, axis):
            def shifted(k):
                p = [r0, z0, t0]
                p[axis] += k * h
                return float(fn(*p))
            return (-shifted(2) + 8 * shifted(1) - 8 * shifted(-1) + shifted(-2)) / (12 * h)

        def d2(fn, axis):
            def shifted(k):
                p = [r0, z0, t0]
                p[axis] += k * h
                return float(fn(*p))
            return (-shifted(2) + 16 * shifted(1) - 30 * shifted(0) + 16 * shifted(-1) - shifted(-2)) / (12 * h * h)

        ur = -d1(self._psi, 1) / r0
        uz = d1(self._psi, 0) / r0
        w = float(self._omega(r0, z0, t0))

        omega_terms = [
            d1(self._omega, 2), ur * d1(self._omega, 0), uz * d1(self._omega, 1),
            -d2(self._omega, 0), -d1(self._omega, 0) / r0, w / r0 ** 2,
            d1(self._rho, 0), -(ur / r0) * w,
        ]
        rho_terms = [
            d1(self._rho, 2), ur * d1(self._rho, 0), uz * d1(self._rho, 1),
            -d2(self._rho, 0), -d1(self._rho, 0) / r0,
        ]
        errors = []
        for terms, fn in ((omega_terms, self._forcing_omega), (rho_terms, self._forcing_rho)):
            scale = sum(abs(x) for x in terms) or 1.0
            errors.append(abs(sum(terms) - float(fn(r0, z0, t0))) / scale)
        return max(errors)


# =============================================================================
# Dense Poisson
# =============================================================================

def fourier_second_derivative_matrix(n: int, period: float) -> np.ndarray:
    """Dense periodic spectral second-derivative matrix (n even)."""
    h = 2.0 * np.pi / n
    j = np.arange(n)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore"):
        off = -((-1.0) ** diff) / (2.0 * np.sin(diff * h / 2.0) ** 2)
    matrix = np.where(diff == 0, -np.pi ** 2 / (3.0 * h ** 2) - 1.0 / 6.0, off)
    return matrix * (2.0 * np.pi / period) ** 2


def dense_streamfunction_operator(grid: MeridianGrid) -> np.ndarray:
    """Assemble the full 2D discrete operator acting on flattened psi (index i*nz + j)."""
    nr, nz = grid.nr, grid.nz
    dr2 = grid.dr ** 2
    r = (np.arange(nr) + 0.5) * grid.dr
    face = lambda i: i * grid.dr  # r_{i-1/2}

    radial = np.zeros((nr, nr))
    for i in range(nr):
        outer, inner = face(i + 1), face(i)
        radial[i, i] = -(outer + inner) / (r[i] * dr2) - 1.0 / r[i] ** 2
        if i + 1 < nr:
            radial[i, i + 1] = outer / (r[i + 1] * dr2)
        else:
            radial[i, i] -= outer / (r[i] * dr2)
        if i > 0:
            radial[i, i - 1] = inner / (r[i - 1] * dr2)

    vertical = fourier_second_derivative_matrix(nz, grid.Lz)
    return np.kron(radial, np.eye(nz)) + np.kron(np.eye(nr), vertical)


def dense_poisson(omega_theta: ScalarField2D) -> ScalarField2D:
    """Reference streamfunction by direct elimination on tiny grids."""
    grid = omega_theta.grid
    if grid.nr * grid.nz > DENSE_POISSON_MAX_NODES:
        raise OracleSizeError(f"dense Poisson limited to {DENSE_POISSON_MAX_NODES} nodes, got {grid.nr * grid.nz}")
    matrix = dense_streamfunction_operator(grid)
    rhs = -(grid.r_nodes[:, None] * omega_theta.values).ravel()
    try:
        psi = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(-1, 0.0) from exc
    return ScalarField2D(grid=grid, values=psi.reshape(grid.nr, grid.nz), parity=Parity.EVEN, label="psi")


# =============================================================================
# Quadrature
# =============================================================================

class QuadratureResult(BaseModel):
    value: float
    coarse_value: float
    converged: bool


def _cylindrical_sum(profile: Callable, p: float, R: float, Lz: float, panels: int, chunk: int = 256) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(2)
    edges = np.linspace(0.0, R, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wr = (half[:, None] * weights[None, :]).ravel() * 2.0 * np.pi * r
    z = np.arange(panels) * (Lz / panels)
    wz = Lz / panels

    if math.isinf(p):
        return max(float(np.max(np.abs(profile(r[s:s + chunk, None], z[None, :]))))
                   for s in range(0, r.size, chunk))
    total = 0.0
    for s in range(0, r.size, chunk):
        block = np.abs(profile(r[s:s + chunk, None], z[None, :])) ** p
        total += float(np.sum(wr[s:s + chunk, None] * block)) * wz
    return total ** (1.0 / p)


def quadrature_norm(profile: Callable[[np.ndarray, np.ndarray], np.ndarray], p: float,
                    R: float, Lz: float, panels: int = 4096) -> QuadratureResult:
    """High-resolution cylindrical L^p norm of a closed-form profile (r, z) on [0,R] x [0,Lz).

    Non-convergence (half-resolution value differing by more than 1e-8 relative)
    is flagged, not raised.
    """
    value = _cylindrical_sum(profile, float(p), R, Lz, panels)
    coarse = _cylindrical_sum(profile, float(p), R, Lz, panels // 2)
    converged = abs(value - coarse) <= 1e-8 * max(abs(value), 1e-300) or value == coarse
    if not converged:
        logger.warning(f"Quadrature not converged: {value!r} vs {coarse!r} at half resolution")
    return QuadratureResult(value=value, coarse_value=coarse, converged=converged)


# =============================================================================
# Direct convolution
# =============================================================================

def _kernel_table(kernel: Callable, n: int, h: float) -> np.ndarray:
    """h^3 K on the offsets -(n-1)..(n-1) per axis, zero at the centre."""
    offsets = np.arange(-(n - 1), n) * h
    dx1, dx2, dx3 = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    centre = (dx1 == 0) & (dx2 == 0) & (dx3 == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        table = np.where(centre, 0.0, kernel(dx1, dx2, dx3))
    return table * h ** 3


def direct_convolution(kernel: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
                       samples: np.ndarray, h: float) -> np.ndarray:
    """Midpoint-rule convolution (K * f)(x_p) = sum_q K(x_p - x_q) f(x_q) h^3.

    Args:
        kernel: closed-form kernel of the offset components
        samples: f on an n^3 cell-centered box
        h: grid spacing

    Returns:
        convolution samples on the same nodes; the x_p = x_q cell is omitted
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    if n > DIRECT_CONVOLUTION_MAX_N:
        raise OracleSizeError(f"direct convolution limited to n <= {DIRECT_CONVOLUTION_MAX_N}, got {n}")
    table = _kernel_table(kernel, n, h)
    flipped = samples[::-1, ::-1, ::-1]

    out = np.empty(samples.shape, dtype=np.result_type(table, samples))
    for a in range(n):
        for b in range(n):
            for c in range(n):
                # table index (p - q) + n - 1 runs over [p, p + n) as q runs backwards
                window = table[a:a + n, b:b + n, c:c + n]
                out[a, b, c] = np.sum(window * flipped)
    return out


def lattice_convolution(kernel: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
                        samples: np.ndarray, h: float) -> np.ndarray:
    """The punctured sum of direct_convolution evaluated by FFT convolution; no size limit."""
    samples = np.asarray(samples, dtype=float)
    table = _kernel_table(kernel, samples.shape[0], h)
    # "same" keeps full-convolution indices n-1 .. 2n-2, i.e. offsets p - q
    return fftconvolve(samples, table, mode="same")


# =============================================================================
# Singular lattice sums
# =============================================================================

def _plateau(t) -> np.ndarray:
    """Smooth cutoff: 1 for t <= 1/2, 0 for t >= 1, C-infinity in between."""
    u = np.clip(2.0 * np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        rising = np.where(u > 0.0, np.exp(-1.0 / np.where(u > 0.0, u, 1.0)), 0.0)
        falling = np.where(u < 1.0, np.exp(-1.0 / np.where(u < 1.0, 1.0 - u, 1.0)), 0.0)
    return falling / (falling + rising)


@lru_cache(maxsize=4)
def _lattice(radius: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    m = np.arange(-radius, radius + 1, dtype=float)
    m1, m2, m3 = np.meshgrid(m, m, m, indexing="ij")
    norm = np.sqrt(m1 ** 2 + m2 ** 2 + m3 ** 2)
    weight = np.where(norm > 0, _plateau(norm / radius), 0.0)
    return m1, m2, m3, norm, weight


def sphere_integral(fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray], order: int = 24) -> float:
    """Integral of fn over the unit sphere: Gauss-Legendre in cos(theta), periodic rule in phi."""
    mu, weights = np.polynomial.legendre.leggauss(order)
    phi = np.arange(2 * order) * (np.pi / order)
    s = np.sqrt(1.0 - mu ** 2)[:, None]
    y1 = s * np.cos(phi)[None, :]
    y2 = s * np.sin(phi)[None, :]
    y3 = np.broadcast_to(mu[:, None], y1.shape)
    values = np.broadcast_to(fn(y1, y2, y3), y1.shape)
    return float(np.sum(weights[:, None] * values)) * (np.pi / order)


def lattice_constant(fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray], degree: float,
                     radius: int = LATTICE_RADIUS) -> float:
    """Z[g] = lim (sum over Z^3 minus origin of g phi(m/rho) - integral of g phi(y/rho)).

    g must be homogeneous of the given degree > -3. With a plateau cutoff phi
    the limit is reached to near machine precision at moderate rho.
    """
    if not degree > -3:
        raise ValueError(f"degree must exceed -3, got {degree}")
    m1, m2, m3, norm, weight = _lattice(radius)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(norm > 0, fn(m1, m2, m3), 0.0)
    lattice = float(np.sum(values * weight))
    radial, _ = quad(lambda t: t ** (degree + 2) * float(_plateau(t)), 0.0, 1.0,
                     points=(0.5,), limit=200, epsabs=1e-15, epsrel=1e-13)
    integral = sphere_integral(fn) * radius ** (degree + 3) * radial
    return lattice - integral


def central_difference(samples: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order centered derivative along one axis, zero beyond the box."""
    widths = [(2, 2) if a == axis else (0, 0) for a in range(samples.ndim)]
    padded = np.pad(samples, widths)
    n = samples.shape[axis]
    shift = lambda k: np.take(padded, np.arange(k, k + n), axis=axis)
    return (-shift(4) + 8.0 * shift(3) - 8.0 * shift(1) + shift(0)) / (12.0 * h)


class SingularKernel:
    """A kernel homogeneous of degree d > -3 with its lattice correction.

    The punctured sum T = h^3 sum' K(x_p - x_q) f(x_q) differs from the integral by

        T - I = h^(3+d) Z[K] f(x_p) - h^(4+d) sum_i Z[K y_i] d_i f(x_p) + O(h^(5+d)).

    Attributes:
        name: label for logs
        fn: closed-form kernel of the offset components
        degree: homogeneity degree d
    """

    def __init__(self, name: str, fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray], degree: float):
        if not degree > -3:
            raise ValueError(f"kernel '{name}' is not locally integrable (degree {degree})")
        self.name = name
        self.fn = fn
        self.degree = degree

    def __call__(self, y1, y2, y3):
        return self.fn(y1, y2, y3)

    @cached_property
    def moments(self) -> np.ndarray:
        """[Z[K], Z[K y1], Z[K y2], Z[K y3]]."""
        fn = self.fn
        values = [lattice_constant(fn, self.degree)]
        for axis in range(3):
            moment = lambda y1, y2, y3, a=axis: fn(y1, y2, y3) * (y1, y2, y3)[a]
            values.append(lattice_constant(moment, self.degree + 1))
        logger.debug(f"Lattice constants of {self.name}: {values}")
        return np.array(values)

    def correction(self, samples: np.ndarray, h: float) -> np.ndarray:
        """I - T to the order of the first moments."""
        z = self.moments
        out = -h ** (3 + self.degree) * z[0] * np.asarray(samples, dtype=float)
        for axis in range(3):
            if abs(z[axis + 1]) > MOMENT_FLOOR:
                out = out + h ** (4 + self.degree) * z[axis + 1] * central_difference(samples, h, axis)
        return out

    def convolve(self, samples: np.ndarray, h: float, direct: bool = True) -> np.ndarray:
        """Corrected midpoint convolution; `direct` selects the O(n^6) loop over the FFT route."""
        raw = direct_convolution(self.fn, samples, h) if direct else lattice_convolution(self.fn, samples, h)
        return raw + self.correction(samples, h)
