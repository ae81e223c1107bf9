"""Command-line entry point.

    torusdiss <subcommand> --config <path> [--out <dir>] [--jobs N] [--no-plots]

Subcommands: norms | dissipation | pseudospectrum | correlations | bounds |
sweep | selftest.  Exit codes: 0 success, 2 config error, 3 numerical
failure, 4 bound violation.
"""

import argparse
import sys
import traceback

from .config import load_config
from .errors import BoundViolation, ConfigurationError, NumericalFailure
from . import runner as runner_mod
from .runner import Runner

SUBCOMMANDS = ("norms", "dissipation", "pseudospectrum", "correlations",
               "bounds", "sweep", "selftest")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="torusdiss",
        description="dissipation times and correlation decay for noisy torus maps")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name != "selftest":
            p.add_argument("--config", required=True, help="experiment config file")
            p.add_argument("--out", default=".", help="output directory")
            p.add_argument("--jobs", type=int, default=None,
                           help="worker threads (default: config, then cores)")
            p.add_argument("--no-plots", action="store_true",
                           help="skip figure rendering")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.subcommand == "selftest":
            return runner_mod.cmd_selftest()
        cfg = load_config(args.config)
        runner = Runner(cfg, args.out, jobs=args.jobs,
                        plots=False if args.no_plots else None)
        if args.subcommand == "norms":
            return runner_mod.cmd_norms(runner)
        if args.subcommand == "dissipation":
            return runner_mod.cmd_dissipation(runner)[0]
        if args.subcommand == "pseudospectrum":
            return runner_mod.cmd_pseudospectrum(runner)
        if args.subcommand == "correlations":
            return runner_mod.cmd_correlations(runner)
        if args.subcommand == "bounds":
            return runner_mod.cmd_bounds(runner)[0]
        if args.subcommand == "sweep":
            return runner_mod.cmd_sweep(runner)
        raise ValueError(f"unhandled subcommand {args.subcommand}")
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except BoundViolation as exc:
        print(f"bound violation: {exc}", file=sys.stderr)
        return 4
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
