"""
Command Handlers

One handler per laboratory command. Handlers call the laboratory engine,
print a short report and translate failures into the exit-code contract:

    0  all checks passed
    1  a verification check failed
    2  usage / configuration / precondition error
    3  numerical abort
"""

import logging
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from app.core.errors import CheckFailure, ConfigError, LabError
from app.services.lab.engine import MMS_ORDER, MMS_RESOLUTIONS, laboratory, parse_config

logger = logging.getLogger(__name__)

EXIT_OK = 0

# Relative tolerance of the direct kernel sum against the spectral route
KERNEL_TOLERANCE = 0.05


def _guarded(name: str, body: Callable[[], int]) -> int:
    """Run a command body and map failures to exit codes."""
    try:
        return body()
    except LabError as e:
        logger.error(f"{name} failed: {e}", exc_info=True)
        return e.exit_code
    except OSError as e:
        logger.error(f"{name} could not access a file: {e}", exc_info=True)
        return ConfigError.exit_code


# =============================================================================
# simulate
# =============================================================================

def cmd_simulate(config_path: str) -> int:
    def body() -> int:
        config = parse_config(config_path)
        outcome = laboratory.simulate(config)
        for verdict in outcome.verdicts:
            print(verdict.line())
        if outcome.growth is not None and not outcome.growth.finite:
            logger.warning("Tracked growth quantities are not finite")
        print(f"{outcome.rows} rows to t={outcome.final_time:.6g} in {outcome.output_dir}")
        if not outcome.passed:
            failed = [v.name for v in outcome.verdicts if not v.passed]
            raise CheckFailure(f"checks failed: {', '.join(failed)}")
        return EXIT_OK

    return _guarded("simulate", body)


# =============================================================================
# verify-identity
# =============================================================================

def _identity_levels(n: int, levels: int) -> List[int]:
    if levels < 1:
        raise ConfigError(f"levels must be at least 1, got {levels}", key="levels")
    return [n >> k for k in reversed(range(levels))]


def cmd_verify_identity(n: int = 128, box_size: Optional[float] = None, levels: int = 3,
                        profile: str = "balanced", sigma: float = 1.0, tolerance: float = 1e-3,
                        nr: Optional[int] = None, R: Optional[float] = None,
                        kernel: bool = False, published_constants: bool = False) -> int:
    """Identity cross-check.

    Without a box size the check runs as a study: `levels` resolutions ending
    at n, each on a box of side 0.375 n. The errors must fall
    level by level and the finest must meet the tolerance. A fixed box size
    runs the single check at n.
    """
    def body() -> int:
        failures = []
        if box_size is None:
            study = laboratory.verify_identity_study(_identity_levels(n, levels), profile=profile, sigma=sigma)
            reports = study.levels
            if not study.monotone:
                errors = ", ".join(f"{r.relative_l2_error:.3e}" for r in reports)
                failures.append(f"identity error not decreasing: {errors}")
        else:
            reports = [laboratory.verify_identity(n=n, box_size=box_size, profile=profile, sigma=sigma,
                                                  nr=nr, R=R)]
        for report in reports:
            print(f"identity n={report.n} L={report.box_size:g} profile={report.profile}")
            print(f"relative_l2_error {report.relative_l2_error!r}")
            print(f"core_relative_l2_error {report.core_relative_l2_error!r}")
            print(f"mean_adjustment {report.mean_adjustment!r} boundary_value {report.boundary_value!r}")
        finest = reports[-1].relative_l2_error
        if not finest <= tolerance:
            failures.append(f"identity error {finest:.3e} > {tolerance:.1e}")

        if kernel:
            kernel_report = laboratory.verify_kernel(published_constants=published_constants)
            print(f"kernel_relative_l2_error {kernel_report.relative_l2_error!r}")
            print(f"kernel_imaginary_residue {kernel_report.imaginary_residue!r}")
            if kernel_report.residue_flagged:
                failures.append(f"kernel imaginary residue {kernel_report.imaginary_residue:.3e}")
            if not kernel_report.relative_l2_error <= KERNEL_TOLERANCE:
                failures.append(f"kernel error {kernel_report.relative_l2_error:.3e} > {KERNEL_TOLERANCE}")

        if failures:
            raise CheckFailure("; ".join(failures))
        return EXIT_OK

    return _guarded("verify-identity", body)


# =============================================================================
# verify-inequalities
# =============================================================================

def cmd_verify_inequalities(samples: int = 50, seed: int = 0, which: Optional[Sequence[str]] = None,
                            n: int = 16, harmonic_n: int = 32, ratios_path: Optional[str] = None) -> int:
    def body() -> int:
        reports = laboratory.verify_inequalities(samples=samples, seed=seed, which=which, n=n,
                                                 harmonic_n=harmonic_n, ratios_path=ratios_path)
        failed: List[str] = []
        for report in reports:
            status = "PASS" if report.passed else "FAIL"
            print(f"{report.lemma} max_ratio={report.max_ratio!r} refined={report.refined_max_ratio!r} "
                  f"skipped={report.skipped} {status}")
            if not report.passed:
                failed.append(report.lemma)
        if failed:
            raise CheckFailure(f"unstable or non-finite constants: {', '.join(failed)}")
        return EXIT_OK

    return _guarded("verify-inequalities", body)


# =============================================================================
# lp-analyze
# =============================================================================

def cmd_lp_analyze(n: int = 32, seed: int = 0, samples: int = 10) -> int:
    def body() -> int:
        report = laboratory.lp_analyze(n=n, seed=seed, samples=samples)
        qo = report.quasi_orthogonality
        print(f"partition_residual {report.partition_residual!r}")
        print(f"quasi_orthogonality blocks={qo.block_residual!r} products={qo.product_residual!r}")
        for b in report.bernstein:
            print(f"bernstein j={b.level} max_abs_log2={b.max_abs_log2:.4f} {'PASS' if b.passed else 'FAIL'}")
        for h in report.heat_decay:
            print(f"heat_decay j={h.level} rate={h.rate:.6g} band=[{h.lower:.6g}, {h.upper:.6g}] "
                  f"{'PASS' if h.passed else 'FAIL'}")
        print(f"interpolation max_ratio={report.interpolation.max_ratio!r}")
        if not report.passed:
            raise CheckFailure("Littlewood-Paley suite failed")
        return EXIT_OK

    return _guarded("lp-analyze", body)


# =============================================================================
# convergence
# =============================================================================

def cmd_convergence(study: str = "mms", resolutions: Sequence[int] = MMS_RESOLUTIONS,
                    config_path: Optional[str] = None, nz: Optional[int] = None, t_end: float = 0.1) -> int:
    def body() -> int:
        if study == "mms":
            report = laboratory.mms_study(resolutions=resolutions, nz=nz, t_end=t_end)
            print(f"{'nr':>6} {'nz':>6} " + " ".join(f"{name + '_err':>14}" for name in report.errors))
            for i, (nr, nz_i) in enumerate(zip(report.resolutions, report.nz)):
                print(f"{nr:>6} {nz_i:>6} " + " ".join(f"{values[i]:>14.6e}" for values in report.errors.values()))
            print("order         " + " ".join(f"{order:>14.3f}" for order in report.orders.values()))
            worst = min(report.orders.values())
            if not worst >= MMS_ORDER:
                raise CheckFailure(f"observed order {worst:.3f} < {MMS_ORDER}")
            return EXIT_OK

        if study == "ledger":
            if config_path is None:
                raise ConfigError("the ledger study needs --config", key="config")
            ledger = laboratory.ledger_study(parse_config(Path(config_path)))
            for c in ledger.comparisons:
                print(f"{c.name} coarse={c.coarse_margin!r} fine={c.fine_margin!r} {'PASS' if c.halved else 'FAIL'}")
            if not ledger.passed:
                raise CheckFailure("violating margins did not halve under refinement")
            return EXIT_OK

        raise ConfigError(f"unknown study '{study}'; expected mms or ledger", key="study")

    return _guarded("convergence", body)
