"""
Run artifact persistence for privquery.

Writes JSON-lines traces and results, CSV summary tables and the run
manifest. All writes for a run go through one ``RunReportService`` so
output ordering is decided in a single place.
"""

import json
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import pandas as pd
import structlog
from pydantic import BaseModel

from privquery.core.config import settings
from privquery.core.monitoring import metrics_collector
from privquery.models.dataset import LabeledDataset
from privquery.models.experiment import RunManifest, SummaryStats, TrialResult

logger = structlog.get_logger(__name__)


class WrittenArtifact(BaseModel):
    """Metadata of a file written for a run."""

    path: str
    file_size: int
    rows: int
    write_time: float


def dumps_line(record: Dict[str, Any]) -> str:
    """Deterministic single-line JSON."""
    return json.dumps(record, sort_keys=False, separators=(",", ":"), allow_nan=False)


class RunReportService:
    """Persists everything one CLI invocation produces."""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir or settings.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: List[WrittenArtifact] = []

    def _record(self, path: Path, rows: int, started: float) -> WrittenArtifact:
        artifact = WrittenArtifact(
            path=str(path),
            file_size=path.stat().st_size,
            rows=rows,
            write_time=round(time.perf_counter() - started, 4),
        )
        self.artifacts.append(artifact)
        logger.info("Artifact written", path=artifact.path, rows=rows, file_size=artifact.file_size)
        return artifact

    def write_jsonl(self, name: str, records: Iterable[Dict[str, Any]]) -> WrittenArtifact:
        started = time.perf_counter()
        path = self.output_dir / name
        rows = 0
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for record in records:
                handle.write(dumps_line(record))
                handle.write("\n")
                rows += 1
        return self._record(path, rows, started)

    def write_trace(self, lines: Iterable[Dict[str, Any]], name: str = "trace.jsonl") -> WrittenArtifact:
        """Per-query trace lines followed by engine summaries, in trial order."""
        return self.write_jsonl(name, lines)

    def write_results(self, results: Sequence[TrialResult], name: str = "results.jsonl") -> WrittenArtifact:
        ordered = sorted(results, key=lambda r: r.trial)
        return self.write_jsonl(name, (r.model_dump(mode="json") for r in ordered))

    def write_table(self, table: pd.DataFrame, name: str) -> WrittenArtifact:
        started = time.perf_counter()
        path = self.output_dir / name
        table.to_csv(path, index=False, float_format="%.17g")
        return self._record(path, len(table), started)

    def write_dataset(self, dataset: LabeledDataset, name: str) -> WrittenArtifact:
        """A labeled dataset as an ``x,y`` CSV that ``LabeledDataset.from_csv`` reads back."""
        started = time.perf_counter()
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        dataset.to_csv(path)
        return self._record(path, len(dataset), started)

    def write_summary(self, summaries: Sequence[SummaryStats], name: str = "summary.csv") -> WrittenArtifact:
        table = pd.DataFrame([s.model_dump(mode="json") for s in summaries])
        return self.write_table(table, name)

    def write_manifest(
        self,
        command: str,
        seed: int,
        config: Dict[str, Any],
        canonical_constants: Dict[str, Any],
        scaled_constants: Dict[str, Any],
        scale_factor: float,
        extra: Optional[Dict[str, Any]] = None,
        name: str = "manifest.json",
    ) -> WrittenArtifact:
        started = time.perf_counter()
        manifest = RunManifest(
            created_at=datetime.now(timezone.utc).isoformat(),
            app_version=settings.app_version,
            schema_version=settings.schema_version,
            seed=seed,
            command=command,
            config=config,
            canonical_constants=canonical_constants,
            scaled_constants=scaled_constants,
            scale_factor=scale_factor,
            metrics=metrics_collector.get_metrics(),
            outputs=[a.path for a in self.artifacts],
            extra=extra or {},
        )
        path = self.output_dir / name
        path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        return self._record(path, 1, started)
