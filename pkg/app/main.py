"""
AxiBoussinesq Lab - Command-Line Entry Point

Batch front end of the laboratory. Run as `python -m app.main <command>`:

    simulate              run a configured experiment and check the estimate ledger
    verify-identity       cross-check the u^r/r identity (optionally its kernel form)
    verify-inequalities   empirical constants of the inequality families
    lp-analyze            Littlewood-Paley suite
    convergence           MMS order study or ledger margin refinement
"""

import argparse
import sys
from typing import List, Optional

from app.cli.commands import (
    cmd_convergence,
    cmd_lp_analyze,
    cmd_simulate,
    cmd_verify_identity,
    cmd_verify_inequalities,
)
from app.core.errors import ConfigError
from app.services.lab.engine import MMS_RESOLUTIONS


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors reported under the configuration exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="axibsq",
        description="Axisymmetric Boussinesq laboratory with horizontal-only dissipation",
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = commands.add_parser("simulate", help="Run a configured experiment")
    simulate.add_argument("config", help="Path to a section.key = value run configuration")

    identity = commands.add_parser("verify-identity", help="Cross-check the u^r/r identity")
    identity.add_argument("--n", type=int, default=128, help="Finest box modes per axis (default: 128)")
    identity.add_argument("--levels", type=int, default=3,
                          help="Resolutions n, n/2, ... of the fixed-spacing study (default: 3)")
    identity.add_argument("--box-size", type=float, default=None, dest="box_size",
                          help="Run a single check on this box instead of the study")
    identity.add_argument("--profile", choices=["balanced", "gaussian"], default="balanced")
    identity.add_argument("--sigma", type=float, default=1.0)
    identity.add_argument("--tolerance", type=float, default=1e-3,
                          help="Largest accepted relative L2 error at the finest level (default: 1e-3)")
    identity.add_argument("--nr", type=int, default=None, help="Meridian radial nodes (default: automatic)")
    identity.add_argument("--R", type=float, default=None, help="Meridian radial extent (default: 1.5 * box size)")
    identity.add_argument("--kernel", action="store_true", help="Also run the direct kernel-sum check")
    identity.add_argument("--published-constants", action="store_true", dest="published_constants",
                          help="Use the printed kernel constants instead of the normalized ones")

    inequalities = commands.add_parser("verify-inequalities", help="Inequality harnesses")
    inequalities.add_argument("--samples", type=int, default=50)
    inequalities.add_argument("--seed", type=int, default=0)
    inequalities.add_argument("--which", nargs="+", default=None,
                              help="Inequalities, e.g. 'LemmaA1(4)' Sharp prop27 (default: all)")
    inequalities.add_argument("--n", type=int, default=16, help="Base resolution of the LP harnesses")
    inequalities.add_argument("--harmonic-n", type=int, default=32, dest="harmonic_n",
                              help="Base resolution of the axisymmetric harnesses")
    inequalities.add_argument("--out", default=None, help="Ratios CSV path (default: $BSQ_OUTPUT_DIR/ratios.csv)")

    lp_suite = commands.add_parser("lp-analyze", help="Littlewood-Paley suite")
    lp_suite.add_argument("--n", type=int, default=32)
    lp_suite.add_argument("--seed", type=int, default=0)
    lp_suite.add_argument("--samples", type=int, default=10)

    convergence = commands.add_parser("convergence", help="Refinement studies")
    convergence.add_argument("study", nargs="?", choices=["mms", "ledger"], default="mms")
    convergence.add_argument("--resolutions", type=int, nargs="+", default=list(MMS_RESOLUTIONS),
                             help="Radial node counts of the MMS study (default: 32 64 128)")
    convergence.add_argument("--config", default=None, help="Run configuration of the ledger study")
    convergence.add_argument("--nz", type=int, default=None,
                             help="Vertical nodes of the MMS study (default: refined with nr)")
    convergence.add_argument("--t-end", type=float, default=0.1, dest="t_end",
                             help="Final time of the MMS study (default: 0.1)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "simulate":
        return cmd_simulate(args.config)
    if args.command == "verify-identity":
        return cmd_verify_identity(n=args.n, box_size=args.box_size, levels=args.levels, profile=args.profile,
                                   sigma=args.sigma, tolerance=args.tolerance,
                                   nr=args.nr, R=args.R, kernel=args.kernel,
                                   published_constants=args.published_constants)
    if args.command == "verify-inequalities":
        return cmd_verify_inequalities(samples=args.samples, seed=args.seed, which=args.which, n=args.n,
                                       harmonic_n=args.harmonic_n, ratios_path=args.out)
    if args.command == "lp-analyze":
        return cmd_lp_analyze(n=args.n, seed=args.seed, samples=args.samples)
    return cmd_convergence(study=args.study, resolutions=args.resolutions, config_path=args.config,
                           nz=args.nz, t_end=args.t_end)


if __name__ == "__main__":
    sys.exit(main())
