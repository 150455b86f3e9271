"""Tests for subsampling, resampling and empirical rates."""

from collections import Counter

import numpy as np
import pytest

from privquery.core.random import RandomSource
from privquery.models.dataset import DatasetOrigin, LabeledDataset, UnlabeledDataset
from privquery.services.learners import predict
from privquery.services.sampling import (
    empirical_disagreement,
    empirical_error,
    resample_with_replacement,
    sample_without_replacement,
)
from privquery.utils.exceptions import InvalidArgumentError

pytestmark = pytest.mark.unit


def _indexed(n: int) -> LabeledDataset:
    # x doubles as the record index
    return LabeledDataset(np.arange(n, dtype=np.float64) / n, np.arange(n) % 2)


class TestSampleWithoutReplacement:
    def test_full_subset_is_a_permutation(self, rng):
        S = _indexed(5)
        sub = sample_without_replacement(S, 5, rng)
        assert sorted(sub.x.tolist()) == sorted(S.x.tolist())
        assert sub.origin is DatasetOrigin.SUBSAMPLED

    def test_indices_distinct(self, rng):
        S = _indexed(10000)
        sub = sample_without_replacement(S, 100, rng)
        assert len(sub) == 100
        assert len(np.unique(sub.x)) == 100

    def test_records_are_preserved(self, rng):
        S = _indexed(50)
        sub = sample_without_replacement(S, 20, rng)
        lookup = dict(zip(S.x.tolist(), S.y.tolist()))
        assert all(lookup[x] == y for x, y in zip(sub.x.tolist(), sub.y.tolist()))

    def test_pairs_uniform(self):
        S = _indexed(3)
        counts = Counter()
        root = RandomSource(2024)
        draws = 30000
        for i in range(draws):
            sub = sample_without_replacement(S, 2, root.child(i, "subsample"))
            counts[frozenset(sub.x.tolist())] += 1
        assert len(counts) == 3
        for count in counts.values():
            assert count / draws == pytest.approx(1 / 3, abs=0.01)

    @pytest.mark.parametrize("n_prime", [0, 6])
    def test_size_out_of_range(self, rng, n_prime):
        with pytest.raises(InvalidArgumentError):
            sample_without_replacement(_indexed(5), n_prime, rng)


class TestResampleWithReplacement:
    def test_single_record_copies(self, rng):
        S = LabeledDataset.from_examples([(0.3, 1)])
        out = resample_with_replacement(S, 7, rng)
        assert out.x.tolist() == [0.3] * 7
        assert out.y.tolist() == [1] * 7

    def test_all_distinct_probability(self):
        S = _indexed(4)
        root = RandomSource(77)
        trials = 50000
        distinct = sum(
            len(np.unique(resample_with_replacement(S, 4, root.child(i, "resample")).x)) == 4
            for i in range(trials)
        )
        assert distinct / trials == pytest.approx(24 / 256, abs=0.01)

    def test_count_is_exact(self, rng):
        out = resample_with_replacement(_indexed(10), 37, rng)
        assert len(out) == 37
        assert out.origin is DatasetOrigin.RESAMPLED

    def test_empty_rejected(self, rng):
        with pytest.raises(InvalidArgumentError):
            resample_with_replacement(LabeledDataset.from_examples([]), 3, rng)


class TestEmpiricalRates:
    def test_constant_zero_on_zero_labels(self, thresholds):
        S = LabeledDataset(np.linspace(0, 1, 10), np.zeros(10))
        assert empirical_error(thresholds.constant(0), S) == 0.0

    def test_constant_one_with_three_positives(self, thresholds):
        S = LabeledDataset(np.linspace(0, 1, 10), [1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
        assert empirical_error(thresholds.constant(1), S) == pytest.approx(0.7)

    def test_threshold_fits_four_points(self, thresholds, four_points):
        assert empirical_error(thresholds.threshold(0.4), four_points) == 0.0

    def test_disagreement(self, thresholds):
        S_u = UnlabeledDataset(np.array([0.1, 0.4, 0.7]))
        h1, h2 = thresholds.threshold(0.3), thresholds.threshold(0.5)
        assert empirical_disagreement(h1, h2, S_u) == pytest.approx(1 / 3)
        assert empirical_disagreement(h1, h1, S_u) == 0.0
        assert empirical_disagreement(thresholds.constant(0), thresholds.constant(1), S_u) == 1.0

    def test_empty_rejected(self, thresholds):
        with pytest.raises(InvalidArgumentError):
            empirical_error(thresholds.constant(0), LabeledDataset.from_examples([]))


class TestDisagreementProperties:
    @pytest.fixture
    def hypotheses(self, thresholds, intervals):
        return [
            thresholds.threshold(0.2),
            thresholds.threshold(0.55),
            thresholds.constant(1),
            intervals.interval(0.1, 0.4),
            intervals.interval(0.3, 0.9),
            intervals.constant(0),
        ]

    @pytest.fixture
    def points(self, rng) -> UnlabeledDataset:
        return UnlabeledDataset(rng.uniform(200))

    def test_symmetric(self, hypotheses, points):
        for h1 in hypotheses:
            for h2 in hypotheses:
                assert empirical_disagreement(h1, h2, points) == empirical_disagreement(h2, h1, points)

    def test_triangle_inequality(self, hypotheses, points):
        for h1 in hypotheses:
            for h2 in hypotheses:
                for h3 in hypotheses:
                    direct = empirical_disagreement(h1, h3, points)
                    via = empirical_disagreement(h1, h2, points) + empirical_disagreement(h2, h3, points)
                    assert direct <= via + 1e-12

    def test_error_is_disagreement_with_labeler(self, hypotheses, points, intervals):
        truth = intervals.interval(0.25, 0.6)
        S = LabeledDataset(points.points, predict(truth, points.points))
        for h in hypotheses:
            assert empirical_error(h, S) == empirical_disagreement(h, truth, points)
