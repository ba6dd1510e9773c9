"""
Estimate Ledger

Observes solver states, keeps the per-run table of tracked norms and checks
it against the a priori estimates:

    energy          |u(t)|^2 + int |grad_h u|^2 <= (|u0| + t |rho0|)^2
    density         |rho(t)|^2 + int |grad_h rho|^2 <= |rho0|^2, sup|rho| <= sup|rho0|
    omega_over_r    |F(t)|^2 + int |grad_h F|^2 <= 2 (|F0| + |rho0|)^2,  F = omega/r
    gamma           |Gamma(t)| <= |Gamma0|,  Gamma = omega/r - rho/2

All norms are cylindrical L2 unless stated otherwise.
"""

import csv
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from app.core.errors import GridMismatchError
from app.models.schemas import (
    DIAGNOSTIC_COLUMNS,
    EXTRA_COLUMNS,
    AbortInfo,
    CheckVerdict,
    DiagnosticsRow,
    GrowthReport,
    MarginComparison,
    SeriesGrowth,
)
from app.services.lab.fields import (
    Parity,
    ScalarField2D,
    d_r,
    d_z,
    lp_norm,
)

if TYPE_CHECKING:
    from app.services.lab.solver import SimState

logger = logging.getLogger(__name__)

# Integer exponents used for the sup over p in the L-norm surrogate
L_NORM_EXPONENTS = tuple(range(2, 33))

_TINY = 1e-300


def gamma_field(omega_theta: ScalarField2D, rho: ScalarField2D) -> ScalarField2D:
    """Gamma = omega/r - rho/2 (even)."""
    if omega_theta.grid != rho.grid:
        raise GridMismatchError("omega and rho live on different grids")
    r = omega_theta.grid.r_nodes[:, None]
    return ScalarField2D(grid=rho.grid, values=omega_theta.values / r - 0.5 * rho.values,
                         parity=Parity.EVEN, label="gamma")


def l_norm(f: ScalarField2D, exponents: Sequence[int] = L_NORM_EXPONENTS) -> float:
    """Surrogate of sup_p |f|_p / p over the given exponents."""
    return max(lp_norm(f, p) / p for p in exponents)


def _l2(*fields: ScalarField2D) -> float:
    return math.sqrt(sum(lp_norm(f, 2) ** 2 for f in fields))


def observe(state: "SimState", cfl: float) -> DiagnosticsRow:
    """Evaluate every tracked norm of a state."""
    grid = state.grid
    r = grid.r_nodes[:, None]
    ur, uz = state.velocity.ur, state.velocity.uz
    ur_r = ur.with_values(ur.values / r, parity=Parity.EVEN, label="ur_over_r")
    dr_ur, dr_uz = d_r(ur), d_r(uz)
    dz_ur, dz_uz = d_z(ur), d_z(uz)

    omega_over_r = state.omega.with_values(state.omega.values / r, parity=Parity.EVEN, label="omega_over_r")
    gamma = gamma_field(state.omega, state.rho)

    gradient = np.sqrt(dr_ur.values ** 2 + ur_r.values ** 2 + dz_ur.values ** 2
                       + dr_uz.values ** 2 + dz_uz.values ** 2)

    return DiagnosticsRow(
        t=state.t,
        u_l2=_l2(ur, uz),
        grad_h_u_l2=_l2(dr_ur, ur_r, dr_uz),
        rho_l2=lp_norm(state.rho, 2),
        rho_linf=lp_norm(state.rho, math.inf),
        omega_l2=lp_norm(state.omega, 2),
        omega_over_r_l2=lp_norm(omega_over_r, 2),
        grad_h_omega_over_r_l2=lp_norm(d_r(omega_over_r), 2),
        gamma_l2=lp_norm(gamma, 2),
        dz_rho_l2=lp_norm(d_z(state.rho), 2),
        dz_omega_l2=lp_norm(d_z(state.omega), 2),
        grad_u_linf=float(np.max(gradient)),
        omega_Lnorm=l_norm(state.omega),
        cfl=cfl,
        grad_h_rho_l2=lp_norm(d_r(state.rho), 2),
        grad_h_gamma_l2=lp_norm(d_r(gamma), 2),
        gamma_l4=lp_norm(gamma, 4),
        gamma_linf=lp_norm(gamma, math.inf),
    )


class DiagnosticsRecord(BaseModel):
    """Time-ordered table of DiagnosticsRow values (single writer)."""

    rows: List[DiagnosticsRow] = Field(default_factory=list)
    abort: Optional[AbortInfo] = None

    def append(self, row: DiagnosticsRow) -> None:
        if self.rows and not row.t > self.rows[-1].t:
            raise ValueError(f"time must increase: {row.t} after {self.rows[-1].t}")
        self.rows.append(row)

    def mark_abort(self, step: int, t: float, reason: str) -> None:
        self.abort = AbortInfo(step=step, t=t, reason=reason)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows], dtype=float)

    def integral(self, name: str, squared: bool = True) -> np.ndarray:
        """Running trapezoid integral of a column (squared by default) over recorded times."""
        values = self.column(name)
        if squared:
            values = values ** 2
        if len(values) < 2:
            return np.zeros_like(values)
        return cumulative_trapezoid(values, self.times, initial=0.0)

    def running_integrals(self) -> Dict[str, np.ndarray]:
        names = ("grad_h_u_l2", "grad_h_omega_over_r_l2", "grad_h_rho_l2", "grad_h_gamma_l2")
        return {name: self.integral(name) for name in names if self.rows and getattr(self.rows[0], name) is not None}

    # -------------------------------------------------------------------------
    # CSV
    # -------------------------------------------------------------------------

    def to_csv(self, path: Union[str, Path], extra_path: Optional[Union[str, Path]] = None) -> Path:
        """Write diagnostics.csv (repr floats, so the round trip is exact)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(DIAGNOSTIC_COLUMNS)
            for row in self.rows:
                writer.writerow([repr(float(getattr(row, name))) for name in DIAGNOSTIC_COLUMNS])
        if extra_path is not None:
            with Path(extra_path).open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(EXTRA_COLUMNS)
                for row in self.rows:
                    writer.writerow([repr(float(getattr(row, name) or 0.0)) for name in EXTRA_COLUMNS])
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path], extra_path: Optional[Union[str, Path]] = None) -> "DiagnosticsRecord":
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != DIAGNOSTIC_COLUMNS:
                raise ValueError(f"{path} does not carry the diagnostics header")
            raw = [{name: float(value) for name, value in item.items()} for item in reader]
        if extra_path is not None:
            with Path(extra_path).open(newline="") as fh:
                extras = [{name: float(value) for name, value in item.items()} for item in csv.DictReader(fh)]
            for item, extra in zip(raw, extras):
                item.update({k: v for k, v in extra.items() if k != "t"})
        record = cls()
        for item in raw:
            record.append(DiagnosticsRow(**item))
        return record


# =============================================================================
# Checks
# =============================================================================

def _margins(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return (lhs - rhs) / np.maximum(rhs, _TINY)


def _worst(margins: np.ndarray) -> float:
    """Largest margin after the initial row, where every bound holds with equality."""
    return float(np.max(margins[1:] if margins.size > 1 else margins))


def _verdict(name: str, lhs: np.ndarray, rhs: np.ndarray, tol: float, detail: str = "") -> CheckVerdict:
    margins = _margins(lhs, rhs)
    row_passed = [bool(m <= tol) for m in margins]
    verdict = CheckVerdict(
        name=name,
        passed=all(row_passed),
        worst_margin=_worst(margins),
        tolerance=tol,
        row_passed=row_passed,
        detail=detail,
    )
    logger.info(f"Check {name}: worst margin {verdict.worst_margin:.3e} (tol {tol}) -> {'PASS' if verdict.passed else 'FAIL'}")
    return verdict


def _require_rows(record: DiagnosticsRecord) -> None:
    if not record.rows:
        raise ValueError("diagnostics record is empty")


def check_energy(record: DiagnosticsRecord, tol: float = 1e-3) -> CheckVerdict:
    _require_rows(record)
    first = record.rows[0]
    elapsed = record.times - first.t
    lhs = record.column("u_l2") ** 2 + record.integral("grad_h_u_l2")
    rhs = (first.u_l2 + elapsed * first.rho_l2) ** 2
    return _verdict("energy", lhs, rhs, tol)


def check_density(record: DiagnosticsRecord, tol: float = 1e-3, tol_linf: float = 1e-2) -> CheckVerdict:
    _require_rows(record)
    first = record.rows[0]
    lhs = record.column("rho_l2") ** 2 + record.integral("grad_h_rho_l2")
    rhs = np.full_like(lhs, first.rho_l2 ** 2)
    l2_margins = _margins(lhs, rhs)
    linf_margins = _margins(record.column("rho_linf"), np.full_like(lhs, first.rho_linf))
    row_passed = [bool(a <= tol and b <= tol_linf) for a, b in zip(l2_margins, linf_margins)]
    # report the margin that came closest to its own tolerance
    l2_worst, linf_worst = _worst(l2_margins), _worst(linf_margins)
    worst = l2_worst if l2_worst / tol >= linf_worst / tol_linf else linf_worst
    verdict = CheckVerdict(
        name="density",
        passed=all(row_passed),
        worst_margin=worst,
        tolerance=tol,
        row_passed=row_passed,
        detail=f"l2 margin {l2_worst!r} (tol {tol}), linf margin {linf_worst!r} (tol {tol_linf})",
    )
    logger.info(f"Check density: {verdict.detail} -> {'PASS' if verdict.passed else 'FAIL'}")
    return verdict


def check_omega_over_r(record: DiagnosticsRecord, tol: float = 1e-2) -> CheckVerdict:
    _require_rows(record)
    first = record.rows[0]
    lhs = record.column("omega_over_r_l2") ** 2 + record.integral("grad_h_omega_over_r_l2")
    rhs = np.full_like(lhs, 2.0 * (first.omega_over_r_l2 + first.rho_l2) ** 2)
    return _verdict("omega_over_r", lhs, rhs, tol)


def check_gamma(record: DiagnosticsRecord, tol: float = 1e-3) -> CheckVerdict:
    _require_rows(record)
    lhs = record.column("gamma_l2")
    rhs = np.full_like(lhs, record.rows[0].gamma_l2)
    return _verdict("gamma", lhs, rhs, tol)


def run_checks(record: DiagnosticsRecord, enabled: Iterable[str],
               tolerances: Dict[str, float]) -> List[CheckVerdict]:
    """Evaluate the enabled checks in their canonical order."""
    enabled = set(enabled)
    verdicts = []
    if "energy" in enabled:
        verdicts.append(check_energy(record, tolerances["energy"]))
    if "density" in enabled:
        verdicts.append(check_density(record, tolerances["density"], tolerances["density_linf"]))
    if "omega_over_r" in enabled:
        verdicts.append(check_omega_over_r(record, tolerances["omega_over_r"]))
    if "gamma" in enabled:
        verdicts.append(check_gamma(record, tolerances["gamma"]))
    return verdicts


def refinement_margins(coarse: Sequence[CheckVerdict], fine: Sequence[CheckVerdict]) -> List[MarginComparison]:
    """Compare violations (positive margins) between two resolutions."""
    fine_by_name = {v.name: v for v in fine}
    out = []
    for c in coarse:
        f = fine_by_name[c.name]
        coarse_violation = max(c.worst_margin, 0.0)
        fine_violation = max(f.worst_margin, 0.0)
        out.append(MarginComparison(
            name=c.name,
            coarse_margin=c.worst_margin,
            fine_margin=f.worst_margin,
            halved=fine_violation <= 0.5 * coarse_violation,
        ))
    return out


# =============================================================================
# Growth
# =============================================================================

def envelope_constant(times: np.ndarray, values: np.ndarray) -> float:
    """Smallest C with values <= C exp(exp(C t)) at every sample (0 for a zero series)."""
    mask = values > 0
    if not np.any(mask):
        return 0.0
    t = times[mask]
    logs = np.log(values[mask])

    def excess(c: float) -> float:
        return float(np.max(logs - math.log(c) - np.exp(np.minimum(c * t, 700.0))))

    lo, hi = 1e-12, 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    if excess(lo) <= 0.0:
        return lo
    return float(brentq(excess, lo, hi, xtol=1e-12, rtol=1e-10))


def growth_report(record: DiagnosticsRecord) -> GrowthReport:
    """Finiteness and double-exponential envelope of the tracked growth quantities."""
    series = []
    if record.rows:
        times = record.times
        tracked = {
            "dz_rho_l2": record.column("dz_rho_l2"),
            "dz_omega_l2": record.column("dz_omega_l2"),
            "grad_u_linf_integral": record.integral("grad_u_linf", squared=False),
            "omega_Lnorm": record.column("omega_Lnorm"),
            "omega_l2": record.column("omega_l2"),
        }
        for name, values in tracked.items():
            finite = bool(np.all(np.isfinite(values)))
            series.append(SeriesGrowth(
                name=name,
                finite=finite,
                max_value=float(np.max(values)),
                final_value=float(values[-1]),
                envelope_constant=envelope_constant(times, values) if finite else None,
            ))
    flagged = record.abort is not None
    report = GrowthReport(
        finite=all(s.finite for s in series) and not flagged,
        flagged=flagged,
        abort_reason=record.abort.reason if flagged else None,
        series=series,
    )
    if flagged:
        logger.warning(f"Growth report flagged: run aborted at step {record.abort.step} ({record.abort.reason})")
    return report
