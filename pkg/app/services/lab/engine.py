"""
Laboratory Engine

Orchestrates the laboratory commands: reads run configurations, drives the
solver with the estimate ledger attached, and runs the harmonic-analysis
verification suites. Command handlers call the global `laboratory` instance.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import ConfigError, SimulationAbort
from app.models.schemas import (
    ConvergenceReport,
    HarnessReport,
    IdentityReport,
    IdentityStudyReport,
    KernelReport,
    LedgerStudyReport,
    LPSuiteReport,
    RunConfig,
    SimulationOutcome,
)
from app.services.lab import harmonic, lp
from app.services.lab.diagnostics import (
    DiagnosticsRecord,
    growth_report,
    observe,
    refinement_margins,
    run_checks,
)
from app.services.lab.fields import lp_norm, make_grid
from app.services.lab.oracle import ManufacturedSolution
from app.services.lab.presets import initial_fields
from app.services.lab.solver import Scheme, SimState, StepConfig, cfl_number, run

logger = logging.getLogger(__name__)

LP_INEQUALITIES = ("LemmaA1(4)", "LemmaA2", "Sharp", "AppenL(0.75)", "Interp(0.5)", "Algebra(1.5,1)")
HARMONIC_INEQUALITIES = tuple(harmonic.HARMONIC_INEQUALITIES)

MMS_RESOLUTIONS = (32, 64, 128)
MMS_ORDER = 1.9


# =============================================================================
# Configuration files
# =============================================================================

def parse_config(path: Union[str, Path]) -> RunConfig:
    """Read a `section.key = value` file into a validated RunConfig.

    Raises:
        ConfigError: missing file, malformed line, or an unknown/invalid key (named)
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = dotenv_values(path, interpolate=False)
    return config_from_mapping(raw)


def config_from_mapping(raw: Dict[str, Optional[str]]) -> RunConfig:
    nested: Dict[str, Dict[str, str]] = {}
    for key, value in raw.items():
        section, sep, name = key.partition(".")
        if not sep or not name:
            raise ConfigError(f"config key '{key}' is not of the form section.key", key=key)
        if value is None:
            raise ConfigError(f"config key '{key}' has no value", key=key)
        if value.strip() == "":
            continue
        nested.setdefault(section, {})[name] = value.strip()
    try:
        return RunConfig.model_validate(nested)
    except ValidationError as exc:
        error = exc.errors()[0]
        key = ".".join(str(part) for part in error["loc"])
        raise ConfigError(f"invalid config key '{key}': {error['msg']}", key=key) from exc


# =============================================================================
# Laboratory
# =============================================================================

class Laboratory:
    """Entry point for every laboratory command."""

    # -------------------------------------------------------------------------
    # simulate
    # -------------------------------------------------------------------------

    def simulate(self, config: RunConfig) -> SimulationOutcome:
        """Run the configured experiment and write its artifacts.

        Writes diagnostics.csv, diagnostics_extra.csv and verdicts.txt to
        output.dir, plus snapshots at the configured cadence. On a numerical
        abort the partial diagnostics are written before the abort propagates.
        """
        grid = make_grid(config.grid.nr, config.grid.nz, config.grid.R, config.grid.Lz)
        omega, rho = initial_fields(grid, config.init)
        step_cfg = StepConfig(dt=config.time.dt, scheme=Scheme(config.time.scheme))
        out = Path(config.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        logger.info(f"Simulating on {grid.nr}x{grid.nz} (R={grid.R}, Lz={grid.Lz}) into {out}")

        initial = SimState.from_fields(0.0, omega, rho)
        try:
            record = run(
                initial, step_cfg, config.time.t_end,
                observe_every=config.output.observe_every,
                snapshot_every=config.output.snapshot_every,
                snapshot_dir=out,
            )
        except SimulationAbort as exc:
            if exc.record is not None and exc.record.rows:
                exc.record.to_csv(out / "diagnostics.csv", out / "diagnostics_extra.csv")
            growth_report(exc.record or DiagnosticsRecord())
            raise

        if not record.rows:
            record.append(observe(initial, cfl_number(initial.velocity, step_cfg.dt)))
        record.to_csv(out / "diagnostics.csv", out / "diagnostics_extra.csv")

        verdicts = run_checks(record, config.verify.enabled, config.verify.tolerances)
        (out / "verdicts.txt").write_text("".join(f"{v.line()}\n" for v in verdicts))
        for verdict in verdicts:
            logger.info(f"Check {verdict.line()}")

        return SimulationOutcome(
            output_dir=str(out),
            rows=len(record.rows),
            final_time=record.rows[-1].t,
            verdicts=verdicts,
            growth=growth_report(record),
        )

    # -------------------------------------------------------------------------
    # verify-identity
    # -------------------------------------------------------------------------

    def verify_identity(self, n: int = 32, box_size: float = 12.0, profile: str = "balanced",
                        sigma: float = 1.0, nr: Optional[int] = None, R: Optional[float] = None) -> IdentityReport:
        if profile not in harmonic.PROFILES:
            raise ConfigError(f"unknown profile '{profile}'; expected one of {sorted(harmonic.PROFILES)}",
                              key="profile")
        return harmonic.identity_check(n=n, box_size=box_size, profile=profile, sigma=sigma, nr=nr, R=R)

    def verify_identity_study(self, resolutions: Sequence[int], spacing: float = harmonic.IDENTITY_SPACING,
                              profile: str = "balanced", sigma: float = 1.0) -> IdentityStudyReport:
        if profile not in harmonic.PROFILES:
            raise ConfigError(f"unknown profile '{profile}'; expected one of {sorted(harmonic.PROFILES)}",
                              key="profile")
        if any(n < 8 or n & (n - 1) for n in resolutions):
            raise ConfigError(f"identity resolutions must be powers of 2 >= 8, got {list(resolutions)}", key="n")
        return harmonic.identity_study(resolutions, spacing=spacing, profile=profile, sigma=sigma)

    def verify_kernel(self, n: int = 16, box_size: float = 8.0, sigma: float = 1.25,
                      published_constants: bool = False) -> KernelReport:
        constants = (harmonic.KernelConstants.published() if published_constants
                     else harmonic.KernelConstants.normalized())
        return harmonic.kernel_check(n=n, box_size=box_size, sigma=sigma, constants=constants)

    # -------------------------------------------------------------------------
    # verify-inequalities
    # -------------------------------------------------------------------------

    def verify_inequalities(self, samples: int = 50, seed: int = 0, which: Optional[Sequence[str]] = None,
                            n: int = 16, harmonic_n: int = 32,
                            ratios_path: Optional[Union[str, Path]] = None) -> List[HarnessReport]:
        """Run the requested inequality harnesses and write their ratios CSV."""
        names = list(which) if which else list(LP_INEQUALITIES) + list(HARMONIC_INEQUALITIES)
        reports = []
        for name in names:
            try:
                if name in harmonic.HARMONIC_INEQUALITIES:
                    report = harmonic.harmonic_harness(name, samples=samples, seed=seed, n=harmonic_n)
                else:
                    report = lp.inequality_harness(name, samples=samples, seed=seed, n=n)
            except ValueError as exc:
                raise ConfigError(str(exc), key="which") from exc
            reports.append(report)
        path = Path(ratios_path) if ratios_path else Path(settings.OUTPUT_DIR) / "ratios.csv"
        lp.write_ratios_csv(path, reports)
        logger.info(f"Wrote {sum(len(r.rows) for r in reports)} ratios to {path}")
        return reports

    # -------------------------------------------------------------------------
    # lp-analyze
    # -------------------------------------------------------------------------

    def lp_analyze(self, n: int = 32, seed: int = 0, samples: int = 10,
                   bernstein_levels: Sequence[int] = (2, 3), heat_levels: Sequence[int] = (1, 2, 3)) -> LPSuiteReport:
        box = lp.lp_box(n)
        bank = lp.bank_for(box)
        f = lp.random_field(box, seed)
        g = lp.random_field(box, seed + 1)
        report = LPSuiteReport(
            partition_residual=lp.partition_residual(bank, box),
            quasi_orthogonality=lp.quasi_orthogonality(f, g, bank),
            bernstein=[lp.check_bernstein(j, samples=samples, seed=seed) for j in bernstein_levels],
            heat_decay=[lp.check_heat_decay(j, seed=seed) for j in heat_levels],
            interpolation=lp.inequality_harness("Interp(0.5)", samples=samples, seed=seed, n=min(n, 16)),
        )
        logger.info(f"LP suite: partition residual {report.partition_residual:.2e}, passed={report.passed}")
        return report

    # -------------------------------------------------------------------------
    # convergence
    # -------------------------------------------------------------------------

    def mms_study(self, resolutions: Sequence[int] = MMS_RESOLUTIONS, nz: Optional[int] = None, R: float = 6.0,
                  t_end: float = 0.1, cfl_factor: float = 0.1,
                  scheme: Scheme = Scheme.CNAB2) -> ConvergenceReport:
        """Errors against the decaying manufactured mode with dt proportional to dr.

        nz = None refines z together with r (nz = nr); a fixed nz keeps z at
        that resolution, which the single-harmonic mode resolves exactly.
        """
        if t_end <= 0:
            raise ConfigError(f"t_end must be positive, got {t_end}", key="t_end")
        vertical: List[int] = []
        solution = ManufacturedSolution.decaying_mode()
        errors: Dict[str, List[float]] = {"omega": [], "rho": []}
        for nr in resolutions:
            vertical.append(nr if nz is None else nz)
            grid = make_grid(nr, vertical[-1], R, 2.0 * math.pi)
            forcing_omega, forcing_rho = solution.forcing(grid)
            step_cfg = StepConfig(dt=cfl_factor * grid.dr, scheme=scheme,
                                  forcing_omega=forcing_omega, forcing_rho=forcing_rho)
            final: Dict[str, SimState] = {}
            initial = SimState.from_fields(0.0, solution.omega(grid, 0.0), solution.rho(grid, 0.0))
            run(initial, step_cfg, t_end, observers=[lambda s, _: final.__setitem__("state", s)],
                observe_every=10 ** 9)
            state = final["state"]
            for name, numeric, exact in (("omega", state.omega, solution.omega(grid, state.t)),
                                         ("rho", state.rho, solution.rho(grid, state.t))):
                errors[name].append(lp_norm(numeric - exact) / max(lp_norm(exact), 1e-300))
            logger.info(f"MMS nr={nr} nz={vertical[-1]}: omega err {errors['omega'][-1]:.3e}, "
                        f"rho err {errors['rho'][-1]:.3e}")
        orders = {name: observed_order(resolutions, values) for name, values in errors.items()}
        return ConvergenceReport(study="mms", resolutions=list(resolutions), nz=vertical, errors=errors,
                                 orders=orders)

    def ledger_study(self, config: RunConfig) -> LedgerStudyReport:
        """Check margins at the configured resolution and at (dr, dz, dt) halved."""
        coarse = self._checked_run(config)
        fine_config = config.model_copy(update={
            "grid": config.grid.model_copy(update={"nr": 2 * config.grid.nr, "nz": 2 * config.grid.nz}),
            "time": config.time.model_copy(update={"dt": config.time.dt / 2}),
        })
        fine = self._checked_run(fine_config)
        return LedgerStudyReport(coarse=coarse, fine=fine, comparisons=refinement_margins(coarse, fine))

    def _checked_run(self, config: RunConfig):
        grid = make_grid(config.grid.nr, config.grid.nz, config.grid.R, config.grid.Lz)
        omega, rho = initial_fields(grid, config.init)
        record = run(SimState.from_fields(0.0, omega, rho),
                     StepConfig(dt=config.time.dt, scheme=Scheme(config.time.scheme)),
                     config.time.t_end, observe_every=config.output.observe_every)
        return run_checks(record, config.verify.enabled, config.verify.tolerances)


def observed_order(resolutions: Sequence[int], errors: Sequence[float]) -> float:
    """Least-squares slope of -log(error) against log(resolution)."""
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        return math.inf
    slope = np.polyfit(np.log(np.asarray(resolutions, dtype=float)), np.log(errors), 1)[0]
    return float(-slope)


# Global singleton instance
laboratory = Laboratory()
