"""Shared fixtures for the privquery test suite."""

from typing import Any, Callable, Dict

import numpy as np
import pytest

from privquery.core.monitoring import metrics_collector
from privquery.core.random import RandomSource
from privquery.models.dataset import LabeledDataset
from privquery.models.experiment import ExperimentConfig
from privquery.models.hypothesis import HypothesisFamily, Marginal, MarginalKind, SyntheticDistribution


@pytest.fixture(autouse=True)
def reset_metrics():
    metrics_collector.reset()
    yield
    metrics_collector.reset()


@pytest.fixture
def rng() -> RandomSource:
    return RandomSource(12345)


@pytest.fixture
def thresholds() -> HypothesisFamily:
    return HypothesisFamily.thresholds()


@pytest.fixture
def intervals() -> HypothesisFamily:
    return HypothesisFamily.intervals()


@pytest.fixture
def constant_family() -> HypothesisFamily:
    """{constant-0, constant-1} over tokens 0 and 1."""
    return HypothesisFamily.finite([{0: 0, 1: 0}, {0: 1, 1: 1}], vc_dimension=1)


@pytest.fixture
def uniform_marginal() -> Marginal:
    return Marginal(kind=MarginalKind.UNIFORM, low=0.0, high=1.0)


@pytest.fixture
def noisy_thresholds(thresholds, uniform_marginal) -> SyntheticDistribution:
    return SyntheticDistribution(marginal=uniform_marginal, truth=thresholds.threshold(0.5), noise_rate=0.2)


@pytest.fixture
def four_points() -> LabeledDataset:
    return LabeledDataset.from_examples([(0.1, 0), (0.3, 0), (0.5, 1), (0.9, 1)])


@pytest.fixture
def config_data() -> Dict[str, Any]:
    """A small agnostic threshold experiment that runs in well under a second."""
    return {
        "schema_version": 1,
        "name": "unit",
        "mode": "agnostic",
        "family": "threshold",
        "truth": [0.5],
        "noise_rate": 0.2,
        "n": 56000,
        "m": 50,
        "epsilon": 1.0,
        "delta": 0.05,
        "alpha": 0.1,
        "beta": 0.1,
        "scale_factor": 0.001,
        "trials": 2,
        "seed": 99,
    }


@pytest.fixture
def make_config(config_data) -> Callable[..., ExperimentConfig]:
    def _make(**overrides: Any) -> ExperimentConfig:
        return ExperimentConfig.from_mapping({**config_data, **overrides})

    return _make


@pytest.fixture
def sorted_uniform(rng) -> Callable[[int], np.ndarray]:
    def _draw(size: int) -> np.ndarray:
        return np.sort(np.asarray(rng.fork("points").uniform(size)))

    return _draw
