"""
Littlewood-Paley Analysis

Smooth dyadic decomposition on the periodic box, isotropic and anisotropic
Besov/Sobolev norms, and numerical checks of the harmonic-analysis lemmas the
a priori estimates rely on (Bernstein, heat decay, quasi-orthogonality,
interpolation, product and trilinear inequalities).

Frequencies are the physical box wavenumbers; on the default box L = 2*pi
they are integers.
"""

import csv
import enum
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings
from app.models.schemas import (
    BernsteinReport,
    HarnessReport,
    HarnessRow,
    HeatDecayReport,
    QuasiOrthogonalityReport,
)
from app.services.lab.harmonic import BoxSpec, SpectralField3D, derivative, heat, lp_norm, lp_norm_values

logger = logging.getLogger(__name__)

BERNSTEIN_LOG2_BOUND = 2.0
DEGENERATE_RHS = 1e-14
REFINEMENT_TOLERANCE = 0.25
INTERP_SLACK = 1e-8


def lp_box(n: int) -> BoxSpec:
    return BoxSpec(n=n, L=2.0 * np.pi)


# =============================================================================
# Dyadic bank
# =============================================================================

def _smoothstep(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


class Direction(str, enum.Enum):
    FULL = "Full"
    HORIZONTAL = "Horizontal"
    VERTICAL = "Vertical"


class DyadicBank(BaseModel):
    """Low-pass profile chi and annulus profile phi(xi) = chi(xi/2) - chi(xi).

    Attributes:
        inner: chi = 1 for |xi| <= inner
        outer: chi = 0 for |xi| >= outer
        j_max: highest annulus level
    """
    model_config = ConfigDict(frozen=True)

    inner: float = 0.75
    outer: float = 4.0 / 3.0
    j_max: int = Field(default=6, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "DyadicBank":
        if not 0 < self.inner < self.outer <= 2 * self.inner:
            raise ValueError(f"need 0 < inner < outer <= 2 inner, got ({self.inner}, {self.outer})")
        return self

    @property
    def levels(self) -> List[int]:
        return list(range(-1, self.j_max + 1))

    @property
    def covered_radius(self) -> float:
        """Frequencies up to this radius are fully resolved by the levels."""
        return self.inner * 2.0 ** (self.j_max + 1)

    def chi(self, xi: np.ndarray) -> np.ndarray:
        return 1.0 - _smoothstep((np.abs(xi) - self.inner) / (self.outer - self.inner))

    def phi(self, xi: np.ndarray) -> np.ndarray:
        return self.chi(np.asarray(xi) / 2.0) - self.chi(xi)

    def multiplier(self, j: int, xi: np.ndarray) -> np.ndarray:
        if j < -1:
            raise ValueError(f"dyadic level must be >= -1, got {j}")
        if j == -1:
            return self.chi(xi)
        return self.phi(np.asarray(xi) / 2.0 ** j)

    def low_pass_multiplier(self, q: int, xi: np.ndarray) -> np.ndarray:
        """S_q = sum of the blocks below q, i.e. chi(2^-q xi)."""
        return self.chi(np.asarray(xi) / 2.0 ** q)


def frequency_magnitude(box: BoxSpec, direction: Direction = Direction.FULL) -> np.ndarray:
    k = box.k
    k1, k2, k3 = box.axis_array(k, 0), box.axis_array(k, 1), box.axis_array(k, 2)
    if direction is Direction.HORIZONTAL:
        return np.broadcast_to(np.sqrt(k1 ** 2 + k2 ** 2), (box.n,) * 3)
    if direction is Direction.VERTICAL:
        return np.broadcast_to(np.abs(k3), (box.n,) * 3)
    return np.sqrt(k1 ** 2 + k2 ** 2 + k3 ** 2)


def bank_for(box: BoxSpec) -> DyadicBank:
    """Bank whose levels cover every frequency of the box."""
    top = float(np.max(frequency_magnitude(box)))
    j_max = max(0, math.ceil(math.log2(top / 0.75)) - 1)
    return DyadicBank(j_max=j_max)


def partition_residual(bank: DyadicBank, box: BoxSpec) -> float:
    """max |chi + sum_j phi_j - 1| over box frequencies with |xi| <= 2^j_max."""
    xi = frequency_magnitude(box)
    total = sum(bank.multiplier(j, xi) for j in bank.levels)
    covered = xi <= 2.0 ** bank.j_max
    return float(np.max(np.abs(total - 1.0)[covered]))


def dyadic_block(f: SpectralField3D, j: int, direction: Direction = Direction.FULL,
                 bank: Optional[DyadicBank] = None) -> SpectralField3D:
    bank = bank or bank_for(f.box)
    return f.with_coeffs(bank.multiplier(j, frequency_magnitude(f.box, direction)) * f.coeffs)


def anisotropic_block(f: SpectralField3D, j: int, k: int, bank: Optional[DyadicBank] = None) -> SpectralField3D:
    """Delta^h_j Delta^v_k f."""
    bank = bank or bank_for(f.box)
    mult = (bank.multiplier(j, frequency_magnitude(f.box, Direction.HORIZONTAL))
            * bank.multiplier(k, frequency_magnitude(f.box, Direction.VERTICAL)))
    return f.with_coeffs(mult * f.coeffs)


def low_pass(f: SpectralField3D, q: int, bank: Optional[DyadicBank] = None) -> SpectralField3D:
    bank = bank or bank_for(f.box)
    return f.with_coeffs(bank.low_pass_multiplier(q, frequency_magnitude(f.box)) * f.coeffs)


# =============================================================================
# Besov and Sobolev norms
# =============================================================================

class BesovIndex(BaseModel):
    """Regularity s (horizontal s, vertical t when anisotropic), integrability p, summation q."""
    model_config = ConfigDict(frozen=True)

    s: float
    t: float = 0.0
    p: float = Field(default=2.0, ge=1.0)
    q: float = Field(default=2.0, ge=1.0)


def _lq(terms: Sequence[float], q: float) -> float:
    if not terms:
        return 0.0
    terms = np.asarray(terms, dtype=float)
    if math.isinf(q):
        return float(np.max(terms))
    return float(np.sum(terms ** q) ** (1.0 / q))


def _truncation_bound(f: SpectralField3D, bank: DyadicBank) -> float:
    """L2 norm of the part of f the bank levels do not reach."""
    xi = frequency_magnitude(f.box)
    outside = f.coeffs * (1.0 - bank.low_pass_multiplier(bank.j_max + 1, xi))
    box = f.box
    return math.sqrt(box.h ** 3 * float(np.sum(np.abs(outside) ** 2)) / box.n ** 3)


def besov_norm(f: SpectralField3D, idx: BesovIndex, anisotropic: bool = False,
               bank: Optional[DyadicBank] = None) -> float:
    """(sum_j (2^{js} |Delta_j f|_p)^q)^{1/q}, or the double sum over Delta^h_j Delta^v_k."""
    bank = bank or bank_for(f.box)
    tail = _truncation_bound(f, bank)
    if tail > 1e-12 * max(lp_norm(f, 2), 1e-300):
        logger.warning(f"Dyadic levels stop at j={bank.j_max}; unresolved L2 tail {tail:.3e}")

    terms: List[float] = []
    if not anisotropic:
        xi = frequency_magnitude(f.box)
        for j in bank.levels:
            mult = bank.multiplier(j, xi)
            if not np.any(mult):
                continue
            block = f.with_coeffs(mult * f.coeffs)
            terms.append(2.0 ** (j * idx.s) * lp_norm(block, idx.p))
        return _lq(terms, idx.q)

    xi_h = frequency_magnitude(f.box, Direction.HORIZONTAL)
    xi_v = frequency_magnitude(f.box, Direction.VERTICAL)
    for j in bank.levels:
        mh = bank.multiplier(j, xi_h)
        if not np.any(mh):
            continue
        for k in bank.levels:
            mult = mh * bank.multiplier(k, xi_v)
            if not np.any(mult):
                continue
            block = f.with_coeffs(mult * f.coeffs)
            terms.append(2.0 ** (j * idx.s + k * idx.t) * lp_norm(block, idx.p))
    return _lq(terms, idx.q)


def sobolev_weight(box: BoxSpec, s: float, t: float = 0.0, anisotropic: bool = True) -> np.ndarray:
    if not anisotropic:
        return (1.0 + frequency_magnitude(box) ** 2) ** s
    xi_h = frequency_magnitude(box, Direction.HORIZONTAL)
    xi_v = frequency_magnitude(box, Direction.VERTICAL)
    return (1.0 + xi_h ** 2) ** s * (1.0 + xi_v ** 2) ** t


def sobolev_norm(f: SpectralField3D, s: float, t: float = 0.0, anisotropic: bool = True) -> float:
    """|f|_{H^{s,t}} with weights (1 + |xi_h|^2)^s (1 + xi_3^2)^t, or |f|_{H^s} when isotropic."""
    box = f.box
    weight = sobolev_weight(box, s, t, anisotropic)
    return math.sqrt(box.h ** 3 * float(np.sum(weight * np.abs(f.coeffs) ** 2)) / box.n ** 3)


def mixed_sobolev_norm(f: SpectralField3D, s: float, t: float) -> float:
    """|| |f(., x3)|_{H^s_h} ||_{H^t_v}: horizontal norm per slice, then a vertical norm."""
    box = f.box
    partial = np.fft.ifft(f.coeffs, axis=2)  # horizontal coefficients at each x3
    xi_h = frequency_magnitude(box, Direction.HORIZONTAL)[:, :, :1]
    slice_norms = np.sqrt(box.h ** 2 * np.sum((1.0 + xi_h ** 2) ** s * np.abs(partial) ** 2, axis=(0, 1)) / box.n ** 2)
    coeffs = np.fft.fft(slice_norms)
    k3 = box.k
    return math.sqrt(box.h * float(np.sum((1.0 + k3 ** 2) ** t * np.abs(coeffs) ** 2)) / box.n)


def equivalence_band(box: BoxSpec, s: float, t: float, bank: Optional[DyadicBank] = None) -> Tuple[float, float]:
    """Exact bounds of |f|_{B^{s,t}_{2,2}} / |f|_{H^{s,t}} over fields on the box."""
    bank = bank or bank_for(box)
    xi_h = frequency_magnitude(box, Direction.HORIZONTAL)
    xi_v = frequency_magnitude(box, Direction.VERTICAL)
    horizontal = sum(4.0 ** (j * s) * bank.multiplier(j, xi_h) ** 2 for j in bank.levels)
    vertical = sum(4.0 ** (k * t) * bank.multiplier(k, xi_v) ** 2 for k in bank.levels)
    ratio = np.sqrt(horizontal * vertical / sobolev_weight(box, s, t))
    return float(np.min(ratio)), float(np.max(ratio))


# =============================================================================
# Random fields
# =============================================================================

def random_field(box: BoxSpec, seed: int, base_n: Optional[int] = None) -> SpectralField3D:
    """Gaussian-spectrum random field drawn on a base_n lattice and zero-padded.

    Coefficients are i.i.d. complex normal times exp(-|xi|^2 / (2 sigma^2)), mean-free, with
    sigma = base_n / 8 (in units of the fundamental wavenumber), so one seed is the
    same continuous field at every resolution n >= base_n.
    """
    base_n = base_n or box.n
    if base_n > box.n:
        raise ValueError(f"base_n={base_n} exceeds the box resolution {box.n}")
    rng = np.random.default_rng(seed)
    base = BoxSpec(n=base_n, L=box.L)
    coeffs = rng.normal(size=(base_n,) * 3) + 1j * rng.normal(size=(base_n,) * 3)
    partner = np.roll(np.flip(coeffs, axis=(0, 1, 2)), 1, axis=(0, 1, 2))
    coeffs = 0.5 * (coeffs + np.conj(partner))
    sigma = (2.0 * np.pi / box.L) * base_n / 8.0
    coeffs = coeffs * np.exp(-base.k_squared() / (2.0 * sigma ** 2))
    nyquist = base_n // 2
    coeffs[nyquist, :, :] = 0.0
    coeffs[:, nyquist, :] = 0.0
    coeffs[:, :, nyquist] = 0.0
    coeffs[0, 0, 0] = 0.0
    # sample magnitudes independent of base_n
    coeffs *= base_n ** 1.5

    padded = np.zeros((box.n,) * 3, dtype=complex)
    index = np.fft.fftfreq(base_n, d=1.0 / base_n).astype(int) % box.n
    padded[np.ix_(index, index, index)] = coeffs * (box.n / base_n) ** 3
    return SpectralField3D(box=box, coeffs=padded)


# =============================================================================
# Lemma checks
# =============================================================================

def quasi_orthogonality(f: SpectralField3D, g: SpectralField3D,
                        bank: Optional[DyadicBank] = None) -> QuasiOrthogonalityReport:
    """Residuals of Delta_j Delta_j' = 0 (|j - j'| >= 2) and Delta_j(S_{j'-1}f Delta_j' g) = 0 (|j - j'| >= 5)."""
    box = f.box
    bank = bank or bank_for(box)
    xi = frequency_magnitude(box)
    scale = max(lp_norm(f, 2), 1e-300)
    block_residual, product_residual, pairs = 0.0, 0.0, 0
    for j in bank.levels:
        for jp in bank.levels:
            if abs(j - jp) < 2:
                continue
            both = f.with_coeffs(bank.multiplier(j, xi) * bank.multiplier(jp, xi) * f.coeffs)
            block_residual = max(block_residual, lp_norm(both, 2) / scale)
            pairs += 1

    # products stay alias-free while 10/3 * 2^j' <= n/2 fundamental wavenumbers
    limit = (box.n / 2) * (2.0 * np.pi / box.L) * 0.3
    for jp in bank.levels:
        if jp < 0 or 2.0 ** jp > limit:
            continue
        low = low_pass(f, jp - 1, bank).to_physical()
        high = dyadic_block(g, jp, bank=bank).to_physical()
        product = SpectralField3D.from_physical(box, low * high)
        product_scale = max(lp_norm(product, 2), 1e-300)
        for j in bank.levels:
            if abs(j - jp) < 5:
                continue
            residual = lp_norm(dyadic_block(product, j, bank=bank), 2) / product_scale
            product_residual = max(product_residual, residual)
            pairs += 1
    return QuasiOrthogonalityReport(block_residual=block_residual, product_residual=product_residual,
                                    pairs_checked=pairs)


def _gradient_magnitude(f: SpectralField3D) -> np.ndarray:
    return np.sqrt(sum(derivative(f, axis).to_physical() ** 2 for axis in range(3)))


def check_bernstein(j: int, pairs: Sequence[Tuple[float, float]] = ((2.0, 2.0), (2.0, math.inf)),
                    samples: int = 20, seed: int = 0, n: Optional[int] = None,
                    orders: Sequence[int] = (1, 0)) -> BernsteinReport:
    """Ratios |D^k Delta_j f|_b / (2^{j(k + 3(1/a - 1/b))} |Delta_j f|_a) over random fields.

    k = 1 measures the gradient magnitude, k = 0 the block itself (a < b only).
    Each log2 ratio must lie within BERNSTEIN_LOG2_BOUND of the interval
    [offset, 0]: offset = 0 when a == b, and for a < b the Hoelder floor
    (1/a - 1/b)(-log2 |T| - 3j) of the torus T.
    """
    if j < 0:
        raise ValueError(f"Bernstein check needs j >= 0, got {j}")
    for a, b in pairs:
        if a > b:
            raise ValueError(f"need a <= b, got ({a}, {b})")
    if any(k not in (0, 1) for k in orders):
        raise ValueError(f"derivative orders must be 0 or 1, got {list(orders)}")
    n = n or max(16, 2 ** (j + 3))
    box = lp_box(n)
    bank = bank_for(box)
    log2_volume = 3.0 * math.log2(box.L)
    log2_ratios: List[float] = []
    scores: List[float] = []
    for sample in range(samples):
        block = dyadic_block(random_field(box, seed + sample), j, bank=bank)
        values = block.to_physical()
        measured = {1: _gradient_magnitude(block), 0: values}
        for k in orders:
            for a, b in pairs:
                if k == 0 and a == b:
                    continue
                gap = 1.0 / a - (0.0 if math.isinf(b) else 1.0 / b)
                scale = 2.0 ** (j * (k + 3.0 * gap))
                ratio = lp_norm_values(measured[k], box.h, b) / (scale * lp_norm_values(values, box.h, a))
                value = math.log2(ratio)
                offset = -gap * (log2_volume + 3.0 * j)
                log2_ratios.append(value)
                scores.append(max(value, offset - value))
    max_score = max(scores, default=0.0)
    passed = all(math.isfinite(v) for v in log2_ratios) and max_score <= BERNSTEIN_LOG2_BOUND
    logger.info(f"Bernstein j={j}: max log2 excess {max_score:.3f} over {samples} fields")
    return BernsteinReport(level=j, pairs=[[float(a), float(b)] for a, b in pairs], orders=list(orders),
                           log2_ratios=log2_ratios, max_abs_log2=max_score, passed=passed)


def check_heat_decay(j: int, t_grid: Optional[Sequence[float]] = None, p: float = 2.0, seed: int = 0,
                     n: Optional[int] = None, field: Optional[SpectralField3D] = None) -> HeatDecayReport:
    """Fit the decay rate of |e^{t Delta} Delta_j f|_p and compare with the annulus band."""
    if j < 0:
        raise ValueError(f"heat decay is stated for annulus levels j >= 0, got {j}")
    if field is None:
        field = random_field(lp_box(n or max(16, 2 ** (j + 3))), seed)
    bank = bank_for(field.box)
    block = dyadic_block(field, j, bank=bank)
    if t_grid is None:
        t_grid = np.linspace(0.0, 0.5 / 4.0 ** j, 9)
    t_grid = np.asarray(t_grid, dtype=float)
    norms = np.array([lp_norm(heat(block, t), p) for t in t_grid])
    slope = np.polyfit(t_grid, np.log(norms), 1)[0]
    rate = float(-slope)
    lower = (bank.inner ** 2) * 4.0 ** j
    upper = ((2.0 * bank.outer) ** 2) * 4.0 ** j
    passed = lower <= rate <= upper
    logger.info(f"Heat decay j={j}: rate {rate:.4g} in [{lower:.4g}, {upper:.4g}] -> {passed}")
    return HeatDecayReport(level=j, rate=rate, lower=lower, upper=upper, passed=passed)


# =============================================================================
# Special norms
# =============================================================================

class NormKind(str, enum.Enum):
    L = "L"
    SQRT_L = "SqrtL"
    LOG_LIP = "LogLip"


def special_norms(f: SpectralField3D, kind: Union[NormKind, str], p_max: int = 32,
                  bank: Optional[DyadicBank] = None) -> float:
    """Computable surrogates of the L, sqrt-L and log-Lipschitz norms."""
    kind = NormKind(kind)
    if p_max < 2:
        raise ValueError(f"p_max must be >= 2, got {p_max}")
    if kind is NormKind.LOG_LIP:
        bank = bank or bank_for(f.box)
        values = [float(np.max(_gradient_magnitude(low_pass(f, q, bank)))) / (q + 1)
                  for q in range(2, bank.j_max + 1)]
        return max(values, default=0.0)
    values = f.to_physical()
    power = 1.0 if kind is NormKind.L else 0.5
    return max(lp_norm_values(values, f.box.h, p) / p ** power for p in range(2, p_max + 1))


# =============================================================================
# Inequality harness
# =============================================================================

_INEQUALITY = re.compile(r"^\s*(\w+)\s*(?:\(([^)]*)\))?\s*$")

DEFAULT_PARAMETERS: Dict[str, Tuple[float, ...]] = {
    "LemmaA1": (4.0,),
    "LemmaA2": (),
    "Sharp": (),
    "AppenL": (0.75,),
    "Interp": (0.5,),
    "Algebra": (1.5, 1.0),
}

# (s1, t1) and (s2, t2) endpoints of the interpolation check
INTERP_LOW = (0.5, 0.25)
INTERP_HIGH = (2.0, 1.5)


def parse_inequality(which: str) -> Tuple[str, Tuple[float, ...]]:
    """'LemmaA1(4)' -> ('LemmaA1', (4.0,)); parameters default when omitted."""
    match = _INEQUALITY.match(which)
    if not match or match.group(1) not in DEFAULT_PARAMETERS:
        raise ValueError(f"unknown inequality '{which}'; expected one of {sorted(DEFAULT_PARAMETERS)}")
    name, raw = match.group(1), match.group(2)
    params = tuple(float(v) for v in raw.split(",")) if raw and raw.strip() else DEFAULT_PARAMETERS[name]
    if len(params) != len(DEFAULT_PARAMETERS[name]):
        raise ValueError(f"{name} takes {len(DEFAULT_PARAMETERS[name])} parameter(s), got {len(params)}")
    if name == "LemmaA1" and not params[0] > 2:
        raise ValueError(f"LemmaA1 needs q > 2, got {params[0]}")
    if name == "AppenL" and not 0.5 < params[0] <= 1.0:
        raise ValueError(f"AppenL needs alpha in (1/2, 1], got {params[0]}")
    if name == "Interp" and not 0.0 <= params[0] <= 1.0:
        raise ValueError(f"Interp needs theta in [0, 1], got {params[0]}")
    if name == "Algebra" and not (params[0] > 1.0 and params[1] > 0.5):
        raise ValueError(f"Algebra needs s > 1 and t > 1/2, got {params}")
    return name, params


def _l2(f: SpectralField3D) -> float:
    return lp_norm(f, 2)


def _grad_h_l2(f: SpectralField3D) -> float:
    return math.sqrt(_l2(derivative(f, 0)) ** 2 + _l2(derivative(f, 1)) ** 2)


def _trilinear(f, g, h) -> float:
    box = f.box
    return abs(float(box.h ** 3 * np.sum(f.to_physical() * g.to_physical() * h.to_physical())))


def inequality_sides(name: str, params: Tuple[float, ...], fields: Sequence[SpectralField3D]) -> Tuple[float, float]:
    """(lhs, rhs without constant) of one inequality on concrete fields."""
    f, g, h = fields[0], fields[1], fields[2]
    if name == "LemmaA1":
        q = params[0]
        rhs = (lp_norm(f, 2.0 * (q - 1.0)) ** ((q - 1.0) / q) * _l2(derivative(f, 0)) ** (1.0 / q)
               * _l2(g) ** ((q - 2.0) / q) * _l2(derivative(g, 1)) ** (1.0 / q) * _l2(derivative(g, 2)) ** (1.0 / q)
               * _l2(h))
        return _trilinear(f, g, h), rhs
    if name == "LemmaA2":
        rhs = math.sqrt(_l2(f) * _l2(derivative(f, 2)) * _l2(g) * _grad_h_l2(g) * _l2(h) * _grad_h_l2(h))
        return _trilinear(f, g, h), rhs
    if name == "Sharp":
        grads = [derivative(f, axis) for axis in range(3)]
        grad_l2 = math.sqrt(sum(_l2(d) ** 2 for d in grads))
        grad_h_grad = math.sqrt(sum(_grad_h_l2(d) ** 2 for d in grads))
        return lp_norm(f, math.inf), math.sqrt(grad_l2 * grad_h_grad)
    if name == "AppenL":
        alpha = params[0]
        grad_h = math.sqrt(sobolev_norm(derivative(f, 0), alpha, anisotropic=False) ** 2
                           + sobolev_norm(derivative(f, 1), alpha, anisotropic=False) ** 2)
        rhs = sobolev_norm(f, alpha, anisotropic=False) ** (alpha - 0.5) * grad_h ** (1.5 - alpha)
        return lp_norm(f, math.inf), rhs
    if name == "Interp":
        theta = params[0]
        (s1, t1), (s2, t2) = INTERP_LOW, INTERP_HIGH
        lhs = sobolev_norm(f, theta * s1 + (1 - theta) * s2, theta * t1 + (1 - theta) * t2)
        rhs = sobolev_norm(f, s2, t2) ** (1 - theta) * sobolev_norm(f, s1, t1) ** theta
        return lhs, rhs
    if name == "Algebra":
        s, t = params
        product = SpectralField3D.from_physical(f.box, f.to_physical() * g.to_physical())
        return sobolev_norm(product, s, t), sobolev_norm(f, s, t) * sobolev_norm(g, s, t)
    raise ValueError(f"unknown inequality '{name}'")


def _sample_rows(label: str, name: str, params: Tuple[float, ...], seeds: Sequence[int],
                 box: BoxSpec, base_n: int) -> Tuple[List[HarnessRow], int]:
    def evaluate(seed: int) -> Tuple[float, float]:
        fields = [random_field(box, 3 * seed + offset, base_n) for offset in range(3)]
        return inequality_sides(name, params, fields)

    with ThreadPoolExecutor(max_workers=settings.pool_workers) as pool:
        results = list(pool.map(evaluate, seeds))
    rows, skipped = [], 0
    for seed, (lhs, rhs) in zip(seeds, results):
        if rhs < DEGENERATE_RHS:
            skipped += 1
            continue
        rows.append(HarnessRow(lemma=label, sample_seed=seed, lhs=lhs, rhs=rhs, ratio=lhs / rhs))
    return rows, skipped


def inequality_harness(which: str, samples: int = 50, seed: int = 0, n: int = 16) -> HarnessReport:
    """Empirical constant of one inequality over random fields, with one resolution doubling."""
    name, params = parse_inequality(which)
    label = f"{name}({','.join(f'{p:g}' for p in params)})" if params else name
    seeds = [seed + i for i in range(samples)]
    rows, skipped = _sample_rows(label, name, params, seeds, lp_box(n), n)
    refined, _ = _sample_rows(label, name, params, seeds, lp_box(2 * n), n)

    max_ratio = max((row.ratio for row in rows), default=0.0)
    refined_max = max((row.ratio for row in refined), default=0.0)
    finite = all(math.isfinite(row.ratio) for row in rows + refined)
    stable = finite and abs(refined_max - max_ratio) < REFINEMENT_TOLERANCE * max(max_ratio, 1e-300)
    bound = 1.0 + INTERP_SLACK if name == "Interp" else None
    if skipped:
        logger.warning(f"{label}: skipped {skipped} degenerate samples")
    logger.info(f"{label}: max ratio {max_ratio:.4g} -> {refined_max:.4g} at n={2 * n}")
    return HarnessReport(lemma=label, rows=rows, max_ratio=max_ratio, refined_max_ratio=refined_max,
                         skipped=skipped, finite=finite, stable=stable, bound=bound)


RATIO_COLUMNS = ("lemma", "sample_seed", "lhs", "rhs", "ratio")


def write_ratios_csv(path: Union[str, Path], reports: Iterable[HarnessReport]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATIO_COLUMNS)
        for report in reports:
            for row in report.rows:
                writer.writerow([row.lemma, row.sample_seed, repr(row.lhs), repr(row.rhs), repr(row.ratio)])
    return path
