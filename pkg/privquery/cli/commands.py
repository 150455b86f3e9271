"""
Subcommand implementations for the privquery CLI.

Each command returns a process exit code. Domain errors propagate as
``PrivQueryException`` and are mapped to exit codes by ``main``.
"""

import itertools
import json
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import structlog

from privquery.core.config import settings
from privquery.models.experiment import ExperimentConfig, SweepConfig
from privquery.services.harness import derived_constants, run_trials, summarize, sweep_and_report
from privquery.services.report_service import RunReportService
from privquery.services.verification import verify_suite
from privquery.utils.exceptions import (
    EXIT_OK,
    EXIT_VERIFICATION_FAILED,
    InfeasibleParametersError,
)

logger = structlog.get_logger(__name__)


def _emit(payload: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, allow_nan=False))
    sys.stdout.write("\n")


def _output_dir(output_dir: Optional[Path], name: str) -> Path:
    return Path(output_dir) if output_dir else Path(settings.output_dir) / name


def run_command(
    config_path: Path,
    output_dir: Optional[Path] = None,
    workers: Optional[int] = None,
    trace: bool = False,
    save_data: bool = False,
) -> int:
    """Run every trial of one config and persist traces, results and a manifest."""
    config = ExperimentConfig.from_toml(config_path)
    reports = RunReportService(_output_dir(output_dir, config.name))
    canonical, scaled = derived_constants(config)
    logger.info("Run started", config=str(config_path), mode=config.mode.value, trials=config.trials)

    try:
        runs = run_trials(config, workers, trace, keep_data=save_data)
    except InfeasibleParametersError as exc:
        reports.write_manifest(
            "run", config.seed, config.model_dump(mode="json"), canonical, scaled, config.scale_factor,
            extra={"error": exc.to_dict()},
        )
        raise

    if trace:
        reports.write_trace(itertools.chain.from_iterable(run.trace for run in runs))
    if save_data:
        for run in runs:
            trial = run.result.trial
            if run.sample is not None:
                reports.write_dataset(run.sample, f"data/trial-{trial}-sample.csv")
            if run.queries is not None:
                reports.write_dataset(run.queries, f"data/trial-{trial}-queries.csv")
    results = [run.result for run in runs]
    reports.write_results(results)
    summary = summarize(config, results)
    reports.write_summary([summary])
    reports.write_manifest(
        "run", config.seed, config.model_dump(mode="json"), canonical, scaled, config.scale_factor
    )
    _emit(summary.model_dump(mode="json"))
    return EXIT_OK


def sweep_command(grid_path: Path, output_dir: Optional[Path] = None, workers: Optional[int] = None) -> int:
    """Run every cell of a grid and write the summary table and monotonicity report."""
    sweep = SweepConfig.from_toml(grid_path)
    reports = RunReportService(_output_dir(output_dir, sweep.name))
    report = sweep_and_report(sweep, workers)

    reports.write_table(report.table, "sweep.csv")
    reports.write_jsonl("monotonicity.jsonl", report.monotonicity)
    failed_cells = [s.name for s in report.summaries if s.error is not None]
    canonical, scaled = derived_constants(sweep)
    reports.write_manifest(
        "sweep",
        sweep.seed,
        sweep.model_dump(mode="json"),
        canonical,
        scaled,
        sweep.scale_factor,
        extra={
            "cells": len(report.summaries),
            "failed_cells": failed_cells,
            "unstable_within_budget": report.unstable_within_budget,
        },
    )
    _emit(
        {
            "cells": len(report.summaries),
            "failed_cells": failed_cells,
            "monotonicity": report.monotonicity,
            "unstable_within_budget": report.unstable_within_budget,
        }
    )
    return EXIT_OK


def verify_command(seed: int = 0, mutations: Iterable[str] = (), only: Optional[Iterable[str]] = None) -> int:
    """Run the verification suite; exit 1 when any sub-check fails."""
    report = verify_suite(seed, mutations, only)
    _emit(report.to_dict())
    if not report.passed:
        logger.warning("Verification failed", failed=[c.name for c in report.failures])
        return EXIT_VERIFICATION_FAILED
    return EXIT_OK
