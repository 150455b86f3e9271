"""Tests for the metrics collector."""

import pytest

from privquery.core import monitoring
from privquery.core.monitoring import MetricsCollector, record_failure_metrics, record_trial_metrics

pytestmark = pytest.mark.unit


@pytest.fixture
def collector() -> MetricsCollector:
    return MetricsCollector()


def test_counters_and_histograms(collector):
    collector.increment_counter("trials_total", 2)
    collector.record_histogram("avg_error", 0.25)
    collector.record_histogram("avg_error", 0.75)
    metrics = collector.get_metrics()
    assert metrics["trials_total"] == 2
    assert metrics["avg_error"] == {"count": 2, "sum": 1.0, "avg": 0.5, "min": 0.25, "max": 0.75}
    assert metrics["halt_index"]["count"] == 0


def test_kind_mismatch_rejected(collector):
    with pytest.raises(TypeError):
        collector.increment_counter("avg_error")
    with pytest.raises(TypeError):
        collector.record_histogram("trials_total", 1.0)


def test_histogram_window(collector, mocker):
    mocker.patch.object(monitoring, "HISTOGRAM_WINDOW", 3)
    for value in range(5):
        collector.record_histogram("avg_error", value)
    assert collector.metrics["avg_error"] == [2.0, 3.0, 4.0]


def test_delta_since_checkpoint(collector):
    collector.increment_counter("noise_draws_total", 4)
    collector.record_histogram("avg_error", 0.1)
    collector.set_gauge("workers", 2)
    mark = collector.checkpoint()

    collector.increment_counter("noise_draws_total", 3)
    collector.increment_counter("engine_halts_total")
    collector.record_histogram("avg_error", 0.2)
    collector.record_histogram("stage_seconds_engine", 1.5)
    collector.set_gauge("workers", 4)

    delta = collector.delta_since(mark)
    assert delta == {
        "noise_draws_total": 3,
        "engine_halts_total": 1,
        "avg_error": [0.2],
        "stage_seconds_engine": [1.5],
    }


def test_delta_survives_window_trim(collector, mocker):
    mocker.patch.object(monitoring, "HISTOGRAM_WINDOW", 2)
    mark = collector.checkpoint()
    for value in range(4):
        collector.record_histogram("avg_error", value)
    assert collector.delta_since(mark)["avg_error"] == [2.0, 3.0]


def test_merge_folds_worker_delta(collector):
    worker = MetricsCollector()
    mark = worker.checkpoint()
    worker.increment_counter("noise_draws_total", 5)
    worker.record_histogram("stage_seconds_engine", 0.5)

    collector.increment_counter("noise_draws_total", 1)
    collector.merge(worker.delta_since(mark))
    collector.merge(worker.delta_since(mark))
    assert collector.metrics["noise_draws_total"] == 11
    assert collector.metrics["stage_seconds_engine"] == [0.5, 0.5]


def test_reset_clears_gauges(collector):
    collector.set_gauge("workers", 3)
    collector.reset()
    assert "workers" not in collector.metrics
    mark = collector.checkpoint()
    collector.increment_counter("workers")
    assert collector.delta_since(mark) == {"workers": 1}


def test_trial_and_failure_helpers(mocker):
    fresh = MetricsCollector()
    mocker.patch.object(monitoring, "metrics_collector", fresh)
    record_trial_metrics(0.5, 0.3, 10, 2, halted_at=7)
    record_trial_metrics(0.5, 0.2, 10, 0, halted_at=None)
    record_failure_metrics(infeasible=True)
    metrics = fresh.get_metrics()
    assert metrics["trials_total"] == 2
    assert metrics["queries_answered_total"] == 20
    assert metrics["unstable_answers_total"] == 2
    assert metrics["engine_halts_total"] == 1
    assert metrics["halt_index"]["max"] == 7.0
    assert metrics["trials_failed_total"] == 1
    assert metrics["infeasible_total"] == 1
