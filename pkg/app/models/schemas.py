"""
Pydantic Schemas

Data models for run configuration, diagnostics rows, verification verdicts
and harness reports.
"""

import math
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# =============================================================================
# Run configuration
# =============================================================================

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSection(_Section):
    """Meridian grid parameters.

    Attributes:
        nr: radial node count
        nz: vertical node count (power of 2)
        R: radial extent
        Lz: vertical period
    """
    nr: int = 64
    nz: int = 64
    R: float = 8.0
    Lz: float = 16.0


class TimeSection(_Section):
    dt: float = Field(default=1e-3, gt=0)
    t_end: float = Field(default=1.0, ge=0)
    scheme: Literal["CNAB2", "RK3-IMEX"] = "CNAB2"


class InitSection(_Section):
    """Initial-data preset.

    Attributes:
        kind: zero | density_bubble | vortex_ring | combined
        r0: radial offset of the profile center (0 puts it on the axis)
        z0: vertical center (None means Lz / 2)
        sigma: Gaussian width
        amplitude: peak scale
    """
    kind: Literal["zero", "density_bubble", "vortex_ring", "combined"] = "density_bubble"
    r0: float = Field(default=0.0, ge=0)
    z0: Optional[float] = None
    sigma: float = Field(default=1.0, gt=0)
    amplitude: float = 1.0


class OutputSection(_Section):
    dir: str = "runs/default"
    snapshot_every: int = Field(default=0, ge=0)
    observe_every: int = Field(default=1, ge=1)


CHECK_NAMES = ("energy", "density", "omega_over_r", "gamma")

DEFAULT_TOLERANCES = {
    "energy": 1e-3,
    "density": 1e-3,
    "density_linf": 1e-2,
    "omega_over_r": 1e-2,
    "gamma": 1e-3,
}


class VerifySection(_Section):
    """Which checks to run and how much slack each gets.

    Attributes:
        tolerances: check name -> relative tolerance ("energy:1e-3,gamma:1e-3" in files)
        enabled: checks evaluated after a run ("energy,density" in files)
    """
    tolerances: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    enabled: List[str] = Field(default_factory=lambda: list(CHECK_NAMES))

    @field_validator("tolerances", mode="before")
    @classmethod
    def _parse_tolerances(cls, v):
        if isinstance(v, str):
            parsed = {}
            for item in filter(None, (part.strip() for part in v.split(","))):
                name, _, value = item.partition(":")
                parsed[name.strip()] = float(value)
            v = parsed
        merged = dict(DEFAULT_TOLERANCES)
        merged.update(v)
        unknown = set(merged) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerance names: {sorted(unknown)}")
        return merged

    @field_validator("enabled", mode="before")
    @classmethod
    def _parse_enabled(cls, v):
        if isinstance(v, str):
            v = [part.strip() for part in v.split(",") if part.strip()]
        unknown = [name for name in v if name not in CHECK_NAMES]
        if unknown:
            raise ValueError(f"unknown checks: {unknown}")
        return v


class RunConfig(_Section):
    """Complete run configuration; unknown keys are rejected."""
    grid: GridSection = Field(default_factory=GridSection)
    time: TimeSection = Field(default_factory=TimeSection)
    init: InitSection = Field(default_factory=InitSection)
    output: OutputSection = Field(default_factory=OutputSection)
    verify: VerifySection = Field(default_factory=VerifySection)


# =============================================================================
# Diagnostics
# =============================================================================

DIAGNOSTIC_COLUMNS = (
    "t", "u_l2", "grad_h_u_l2", "rho_l2", "rho_linf", "omega_l2", "omega_over_r_l2",
    "grad_h_omega_over_r_l2", "gamma_l2", "dz_rho_l2", "dz_omega_l2", "grad_u_linf",
    "omega_Lnorm", "cfl",
)

EXTRA_COLUMNS = ("t", "grad_h_rho_l2", "grad_h_gamma_l2", "gamma_l4", "gamma_linf")


class DiagnosticsRow(BaseModel):
    """One observation of every tracked norm (all entries finite).

    The columns after `cfl` go to the companion extra file.
    """
    model_config = ConfigDict(frozen=True)

    t: float
    u_l2: float
    grad_h_u_l2: float
    rho_l2: float
    rho_linf: float
    omega_l2: float
    omega_over_r_l2: float
    grad_h_omega_over_r_l2: float
    gamma_l2: float
    dz_rho_l2: float
    dz_omega_l2: float
    grad_u_linf: float
    omega_Lnorm: float
    cfl: float
    grad_h_rho_l2: Optional[float] = None
    grad_h_gamma_l2: Optional[float] = None
    gamma_l4: Optional[float] = None
    gamma_linf: Optional[float] = None

    @model_validator(mode="after")
    def _finite(self) -> "DiagnosticsRow":
        for name, value in self:
            if value is not None and not math.isfinite(value):
                raise ValueError(f"diagnostic '{name}' is not finite: {value}")
        return self


class AbortInfo(BaseModel):
    step: int
    t: float
    reason: str


class CheckVerdict(BaseModel):
    """Outcome of one a priori estimate check.

    Attributes:
        name: check name
        passed: True when every row is within tolerance
        worst_margin: largest relative excess (lhs - rhs) / rhs over the rows after t0
        tolerance: the relative slack allowed
        row_passed: per-row outcome
        detail: free-form summary
    """
    name: str
    passed: bool
    worst_margin: float
    tolerance: float
    row_passed: List[bool] = Field(default_factory=list)
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name} {self.worst_margin!r} {status}"


class SeriesGrowth(BaseModel):
    name: str
    finite: bool
    max_value: float
    final_value: float
    envelope_constant: Optional[float] = None


class GrowthReport(BaseModel):
    finite: bool
    flagged: bool
    abort_reason: Optional[str] = None
    series: List[SeriesGrowth] = Field(default_factory=list)


class MarginComparison(BaseModel):
    name: str
    coarse_margin: float
    fine_margin: float
    halved: bool


# =============================================================================
# Harness reports
# =============================================================================

class HarnessRow(BaseModel):
    """One sample of an inequality: lhs <= C * rhs, ratio = lhs / rhs."""
    lemma: str
    sample_seed: int
    lhs: float
    rhs: float
    ratio: float


class HarnessReport(BaseModel):
    """Empirical constant of one inequality over a random family.

    Attributes:
        lemma: inequality name
        rows: per-sample ratios at the base resolution
        max_ratio: empirical constant at the base resolution
        refined_max_ratio: empirical constant after one resolution doubling
        skipped: degenerate samples (rhs < 1e-14)
        finite: all ratios finite
        stable: refinement changed the maximum by less than the allowed fraction
        bound: hard upper bound asserted on every ratio, if any
    """
    lemma: str
    rows: List[HarnessRow] = Field(default_factory=list)
    max_ratio: float = 0.0
    refined_max_ratio: Optional[float] = None
    skipped: int = 0
    finite: bool = True
    stable: bool = True
    bound: Optional[float] = None

    @property
    def passed(self) -> bool:
        within = self.bound is None or self.max_ratio <= self.bound
        return self.finite and self.stable and within


class BernsteinReport(BaseModel):
    level: int
    pairs: List[List[float]]
    orders: List[int] = Field(default_factory=lambda: [1])
    log2_ratios: List[float]
    max_abs_log2: float
    passed: bool


class HeatDecayReport(BaseModel):
    level: int
    rate: float
    lower: float
    upper: float
    passed: bool


class IdentityReport(BaseModel):
    """Cross-check of the u^r/r identity against the streamfunction route.

    Attributes:
        n: box modes per axis
        box_size: box side length
        profile: source profile name
        relative_l2_error: full-box relative L2 discrepancy
        core_relative_l2_error: discrepancy restricted to |x| <= box_size / 4
        mean_adjustment: constant mode removed from the source
        boundary_value: largest source magnitude on the box faces
    """
    n: int
    box_size: float
    profile: str
    relative_l2_error: float
    core_relative_l2_error: float
    mean_adjustment: float
    boundary_value: float


class IdentityStudyReport(BaseModel):
    """Identity check repeated at a fixed spacing while the box grows with n.

    Attributes:
        spacing: box grid spacing shared by every level
        levels: one identity report per resolution, coarsest first
        monotone: the relative L2 error decreases strictly from level to level
        finest_error: relative L2 error of the last level
    """
    spacing: float
    levels: List[IdentityReport]
    monotone: bool
    finest_error: float


class KernelReport(BaseModel):
    n: int
    relative_l2_error: float
    imaginary_residue: float
    residue_flagged: bool


class ConvergenceReport(BaseModel):
    """Observed orders of a refinement study.

    Attributes:
        resolutions: radial node counts used
        nz: vertical node counts used at each resolution
        errors: field name -> L2 errors per resolution
        orders: field name -> least-squares order fitted over all resolutions
    """
    study: str
    resolutions: List[int]
    nz: List[int] = Field(default_factory=list)
    errors: Dict[str, List[float]]
    orders: Dict[str, float]


class SYBoundReport(BaseModel):
    """Pointwise comparison of u^r/r with (1/|x|^2) * |omega/r|.

    Attributes:
        max_ratio: largest ratio over the usable points
        valid_points: points with a denominator >= 1e-14
        skipped: points dropped for a vanishing denominator
        vacuous: no usable point at all
    """
    max_ratio: float
    valid_points: int
    skipped: int
    vacuous: bool


class QuasiOrthogonalityReport(BaseModel):
    """Largest relative residuals of the two dyadic support properties."""
    block_residual: float
    product_residual: float
    pairs_checked: int


class LPSuiteReport(BaseModel):
    partition_residual: float
    quasi_orthogonality: QuasiOrthogonalityReport
    bernstein: List[BernsteinReport]
    heat_decay: List[HeatDecayReport]
    interpolation: HarnessReport

    @property
    def passed(self) -> bool:
        return (self.partition_residual <= 1e-12
                and self.quasi_orthogonality.block_residual <= 1e-12
                and self.quasi_orthogonality.product_residual <= 1e-12
                and all(r.passed for r in self.bernstein)
                and all(r.passed for r in self.heat_decay)
                and self.interpolation.passed)


class LedgerStudyReport(BaseModel):
    """Margin comparison of the estimate checks between two resolutions."""
    coarse: List[CheckVerdict]
    fine: List[CheckVerdict]
    comparisons: List[MarginComparison]

    @property
    def passed(self) -> bool:
        return all(c.halved for c in self.comparisons)


# =============================================================================
# Command outcomes
# =============================================================================

class SimulationOutcome(BaseModel):
    """Artifacts and verdicts of one simulate run.

    Attributes:
        output_dir: where diagnostics.csv, verdicts.txt and snapshots were written
        rows: number of recorded diagnostics rows
        final_time: time of the last recorded row
        verdicts: enabled checks in canonical order
        growth: norm-growth summary
    """
    output_dir: str
    rows: int
    final_time: float
    verdicts: List[CheckVerdict] = Field(default_factory=list)
    growth: Optional[GrowthReport] = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)
