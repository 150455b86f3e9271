"""
privquery command-line entry point.

    privquery run CONFIG [--trace] [--save-data] [--output-dir DIR] [--workers N]
    privquery sweep GRID [--output-dir DIR] [--workers N]
    privquery verify [--seed S] [--mutate NAME] [--check NAME]
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import structlog

from privquery import __version__
from privquery.cli.commands import run_command, sweep_command, verify_command
from privquery.core.logging import log_exception, setup_logging
from privquery.services.verification import CHECKS, MUTATIONS
from privquery.utils.exceptions import EXIT_ERROR, PrivQueryException

logger = structlog.get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privquery", description="Private classification-query release experiments"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level", type=str.upper, choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], default=None
    )
    parser.add_argument("--log-format", choices=["json", "console"], default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run the trials of one config file")
    run.add_argument("config", type=Path, help="TOML experiment config")
    run.add_argument("--trace", action="store_true", help="Write the per-query JSON-lines trace")
    run.add_argument(
        "--save-data", action="store_true", help="Write each trial's private sample and labeled queries as CSV"
    )
    run.add_argument("--output-dir", type=Path, default=None)
    run.add_argument("--workers", type=int, default=None, help="Overrides PRIVQUERY_WORKERS")

    sweep = sub.add_parser("sweep", help="Run a parameter grid and write a summary table")
    sweep.add_argument("grid", type=Path, help="TOML sweep config")
    sweep.add_argument("--output-dir", type=Path, default=None)
    sweep.add_argument("--workers", type=int, default=None)

    verify = sub.add_parser("verify", help="Run the built-in verification suite")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--mutate", action="append", default=[], choices=sorted(MUTATIONS))
    verify.add_argument("--check", action="append", default=None, choices=list(CHECKS))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_format)
    try:
        if args.command == "run":
            return run_command(args.config, args.output_dir, args.workers, args.trace, args.save_data)
        if args.command == "sweep":
            return sweep_command(args.grid, args.output_dir, args.workers)
        return verify_command(args.seed, args.mutate, args.check)
    except PrivQueryException as exc:
        log_exception(logger, exc, context=exc.details)
        sys.stderr.write(f"error: {exc.message}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
