"""
Run metrics for privquery.

Counters, gauges and histograms collected while trials execute. Snapshots
are written into the run manifest next to the result tables.
"""

from typing import Any, Dict, List, Set, Union

import structlog

logger = structlog.get_logger(__name__)

HISTOGRAM_WINDOW = 1000

MetricValue = Union[int, float, List[float]]


class MetricsCollector:
    """Collect and expose run metrics."""

    def __init__(self) -> None:
        self.metrics: Dict[str, MetricValue] = {}
        self.recorded: Dict[str, int] = {}
        self.gauges: Set[str] = set()
        self.reset()

    def reset(self) -> None:
        self.metrics = {
            "trials_total": 0,
            "trials_failed_total": 0,
            "infeasible_total": 0,
            "queries_answered_total": 0,
            "unstable_answers_total": 0,
            "engine_halts_total": 0,
            "trial_duration_seconds": [],
            "halt_index": [],
            "avg_error": [],
        }
        self.recorded = {}
        self.gauges = set()

    def increment_counter(self, metric_name: str, value: int = 1) -> None:
        """Increment a counter metric."""
        current = self.metrics.setdefault(metric_name, 0)
        if isinstance(current, list):
            raise TypeError(f"{metric_name} is a histogram")
        self.metrics[metric_name] = current + value

    def record_histogram(self, metric_name: str, value: float) -> None:
        """Record a histogram value."""
        values = self.metrics.setdefault(metric_name, [])
        if not isinstance(values, list):
            raise TypeError(f"{metric_name} is not a histogram")
        values.append(float(value))
        self.recorded[metric_name] = self.recorded.get(metric_name, 0) + 1

        # Bounded window
        if len(values) > HISTOGRAM_WINDOW:
            self.metrics[metric_name] = values[-HISTOGRAM_WINDOW:]

    def set_gauge(self, metric_name: str, value: float) -> None:
        """Set a gauge metric value."""
        self.metrics[metric_name] = value
        self.gauges.add(metric_name)

    def checkpoint(self) -> Dict[str, Any]:
        """Counter values and histogram record counts, for a later ``delta_since``."""
        counters = {k: v for k, v in self.metrics.items() if not isinstance(v, list)}
        return {"counters": counters, "recorded": dict(self.recorded)}

    def delta_since(self, checkpoint: Dict[str, Any]) -> Dict[str, MetricValue]:
        """Counter increments and new histogram values since ``checkpoint``."""
        delta: Dict[str, MetricValue] = {}
        for name, value in self.metrics.items():
            if isinstance(value, list):
                new = self.recorded.get(name, 0) - checkpoint["recorded"].get(name, 0)
                if new > 0:
                    delta[name] = value[-min(new, len(value)):]
            elif name in self.gauges:
                continue
            elif name not in checkpoint["counters"] or value != checkpoint["counters"][name]:
                delta[name] = value - checkpoint["counters"].get(name, 0)
        return delta

    def merge(self, delta: Dict[str, MetricValue]) -> None:
        """Fold in metrics recorded by another process."""
        for name, value in delta.items():
            if isinstance(value, list):
                for item in value:
                    self.record_histogram(name, item)
            else:
                self.increment_counter(name, int(value))

    def get_metrics(self) -> Dict[str, Any]:
        """Get current metrics snapshot."""
        processed_metrics: Dict[str, Any] = {}

        for name, value in self.metrics.items():
            if isinstance(value, list):
                if value:
                    processed_metrics[name] = {
                        "count": len(value),
                        "sum": sum(value),
                        "avg": sum(value) / len(value),
                        "min": min(value),
                        "max": max(value),
                    }
                else:
                    processed_metrics[name] = {
                        "count": 0,
                        "sum": 0,
                        "avg": 0,
                        "min": 0,
                        "max": 0,
                    }
            else:
                processed_metrics[name] = value

        return processed_metrics


# Global metrics collector
metrics_collector = MetricsCollector()


def record_trial_metrics(
    duration: float,
    avg_error: float,
    answered: int,
    unstable: int,
    halted_at: Union[int, None],
) -> None:
    """Record the outcome of one completed trial."""
    metrics_collector.increment_counter("trials_total")
    metrics_collector.increment_counter("queries_answered_total", answered)
    metrics_collector.increment_counter("unstable_answers_total", unstable)
    metrics_collector.record_histogram("trial_duration_seconds", duration)
    metrics_collector.record_histogram("avg_error", avg_error)
    if halted_at is not None:
        metrics_collector.increment_counter("engine_halts_total")
        metrics_collector.record_histogram("halt_index", halted_at)


def record_failure_metrics(infeasible: bool) -> None:
    """Record a trial that raised instead of completing."""
    metrics_collector.increment_counter("trials_failed_total")
    if infeasible:
        metrics_collector.increment_counter("infeasible_total")
