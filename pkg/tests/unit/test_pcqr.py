"""Tests for parameter derivation, the ensemble and the sub-sample engine."""

import math

import numpy as np
import pytest

from privquery.core.monitoring import metrics_collector
from privquery.core.random import RandomSource
from privquery.models.dataset import LabeledDataset, UnlabeledDataset
from privquery.models.engine import EngineState
from privquery.services.learners import erm, erm_learner, predict
from privquery.services.pcqr import (
    PIPELINE_STAGES,
    SubSampEngine,
    agnostic_sample_size,
    derive_agnostic_params,
    derive_subsamp_params,
    execute_agnostic_pcqr,
    minimal_feasible_n,
    partition_indices,
    relabel_sample_size,
    run_agnostic_pcqr,
    run_subsamp,
    train_ensemble,
    uniform_convergence_size,
    unstable_cutoff,
    vote_and_test,
)
from privquery.services.relabel import relabel
from privquery.services.sampling import empirical_error
from privquery.utils.exceptions import InfeasibleParametersError, InvalidArgumentError

pytestmark = pytest.mark.unit


def _noisy_sample(n: int, seed: int, truth_t: float = 0.5, gamma: float = 0.2) -> LabeledDataset:
    rng = RandomSource(seed)
    x = np.asarray(rng.uniform(n))
    y = (x >= truth_t).astype(np.int8) ^ (np.asarray(rng.uniform(n)) < gamma).astype(np.int8)
    return LabeledDataset(x, y)


class TestParameters:
    def test_subsample_size(self):
        assert derive_agnostic_params(0.56, 0.05, 0.1, 0.1, 10, 10000).n_prime == 100

    def test_unstable_cutoff(self):
        assert unstable_cutoff(0.16, 0.05, 1000) == 38

    def test_agnostic_privacy_split(self):
        params = derive_agnostic_params(1.0, 0.01, 0.16, 0.05, 1000, 10000)
        assert params.eps_prime == pytest.approx(0.16 * math.sqrt(160))
        assert params.eps_hat == pytest.approx(0.18874, rel=1e-4)
        assert params.delta_hat == pytest.approx(3.472e-4, rel=1e-3)
        assert params.T == 38

    def test_subsamp_constants(self):
        params = derive_subsamp_params(1, 1.0, 0.05, 0.1, 100)
        assert params.lam == pytest.approx(10.865, rel=1e-4)
        assert params.w == pytest.approx(180.2, rel=1e-3)
        assert params.k == pytest.approx(4695, abs=1)
        assert params.canonical
        assert params.eps_stab == pytest.approx(1 / (2 * params.lam))

    def test_scaling_keeps_canonical_values(self):
        canonical = derive_subsamp_params(1, 1.0, 0.05, 0.1, 100)
        scaled = derive_subsamp_params(1, 1.0, 0.05, 0.1, 100, scale_factor=0.01)
        assert scaled.lam == pytest.approx(0.01 * canonical.lam)
        assert scaled.w == pytest.approx(0.01 * canonical.w)
        assert scaled.k == math.ceil(0.01 * 4695.05)
        assert (scaled.lam_canonical, scaled.k_canonical) == (canonical.lam, canonical.k)
        assert not scaled.canonical

    def test_empty_subsample_is_infeasible(self):
        with pytest.raises(InfeasibleParametersError) as exc_info:
            derive_agnostic_params(1.0, 0.05, 0.1, 0.1, 10, 40)
        assert exc_info.value.minimal_n == 56

    @pytest.mark.parametrize(
        "kwargs",
        [{"eps": 0.0}, {"eps": math.inf}, {"delta": 1.0}, {"beta": 0.0}, {"m": 0}],
    )
    def test_invalid_arguments(self, kwargs):
        args = {"T": 1, "eps": 1.0, "delta": 0.05, "beta": 0.1, "m": 10, **kwargs}
        with pytest.raises(InvalidArgumentError):
            derive_subsamp_params(**args)

    def test_sufficient_size_dominates_block_requirement(self):
        d, eps, delta, alpha, beta, m = 1, 1.0, 0.05, 0.1, 0.1, 100
        n = agnostic_sample_size(d, eps, delta, alpha, beta, m)
        agnostic = derive_agnostic_params(eps, delta, alpha, beta, m, n)
        sub = derive_subsamp_params(agnostic.T, agnostic.eps_hat, agnostic.delta_hat, beta, m)
        assert agnostic.n_prime / sub.k >= (d * math.log(1 / alpha) + math.log(m / beta)) / alpha

    def test_sample_size_helpers(self):
        assert relabel_sample_size(1, 0.1, 0.1) == math.ceil(256 * (1 + math.log(30)) / 0.01)
        assert uniform_convergence_size(1, 0.2, 0.1) == math.ceil(50 * (math.log(5) + math.log(10)) / 0.04)

    def test_minimal_feasible_n_is_runnable(self, thresholds):
        n = minimal_feasible_n(1.0, 0.05, 0.1, 0.1, 50, scale_factor=0.001)
        S = _noisy_sample(n, 1)
        queries = np.linspace(0, 1, 50)
        records = run_agnostic_pcqr(S, 50, queries, thresholds, None, 1.0, 0.05, 0.1, 0.1, RandomSource(1), 0.001)
        assert len(records) == 50
        with pytest.raises(InfeasibleParametersError) as exc_info:
            execute_agnostic_pcqr(
                S.take(np.arange(n - 56), S.origin), 50, queries, thresholds, None,
                1.0, 0.05, 0.1, 0.1, RandomSource(1), 0.001,
            )
        assert exc_info.value.minimal_n == n


class TestEnsemble:
    def test_blocks_drop_remainder(self):
        blocks = partition_indices(10, 3)
        assert [b.tolist() for b in blocks] == [[0, 1, 2], [3, 4, 5], [6, 7, 8]]

    def test_more_blocks_than_records(self):
        with pytest.raises(InfeasibleParametersError) as exc_info:
            partition_indices(2, 3)
        assert exc_info.value.minimal_n == 3

    def test_realizable_blocks_fit_exactly(self, thresholds, rng):
        relabeled = relabel(_noisy_sample(300, 2), thresholds, rng).relabeled
        ensemble = train_ensemble(relabeled, 6, erm_learner(thresholds))
        for h, idx in zip(ensemble, partition_indices(300, 6)):
            assert empirical_error(h, relabeled.take(idx, relabeled.origin)) == 0.0

    def test_single_block_is_prefix_erm(self, thresholds):
        S = _noisy_sample(41, 3)
        (h,) = train_ensemble(S, 1, erm_learner(thresholds))
        assert h == erm(thresholds, S)


def _state(thresholds, ones: int, zeros: int, w_hat: float) -> EngineState:
    ensemble = [thresholds.constant(1)] * ones + [thresholds.constant(0)] * zeros
    return EngineState(ensemble=ensemble, family=thresholds, T=3, w_hat=w_hat)


class TestVoteAndTest:
    def test_majority_and_distance(self, thresholds, rng):
        record = vote_and_test(_state(thresholds, 7, 3, -1e9), 0.4, 1.0, 0.0, rng)
        assert (record.label, record.dist, record.stable) == (1, 4.0, True)

    def test_tie_goes_to_zero(self, thresholds, rng):
        record = vote_and_test(_state(thresholds, 5, 5, -1e9), 0.4, 1.0, 0.0, rng)
        assert (record.label, record.dist) == (0, 0.0)

    def test_unstable_answer_charges_counter_and_redraws(self, thresholds, rng):
        state = _state(thresholds, 5, 5, 1e9)
        record = vote_and_test(state, 0.4, 1.0, 50.0, rng)
        assert not record.stable
        assert record.c == state.c == 1
        assert state.w_hat == pytest.approx(50.0, abs=40.0)

    def test_unanimous_ensemble_never_unstable(self, thresholds):
        params = derive_subsamp_params(1, 1.0, 0.05, 0.1, 100)
        ensemble = [thresholds.threshold(0.5)] * params.k
        engine = SubSampEngine(ensemble, thresholds, params, RandomSource(10))
        records = engine.answer_all(np.asarray(RandomSource(11).uniform(10_000)))
        assert all(r.stable for r in records)
        assert engine.state.c == 0

    def test_all_tie_stream_halts_within_budget(self, thresholds):
        params = derive_subsamp_params(3, 1.0, 0.05, 0.1, 30)
        ensemble = [thresholds.constant(1), thresholds.constant(0)] * 4
        for seed in range(100):
            engine = SubSampEngine(ensemble, thresholds, params, RandomSource(seed))
            records = engine.answer_all(np.full(30, 0.5))
            unstable = sum(1 for r in records if not r.stable and not r.post_halt)
            assert unstable <= params.T + 1
            assert len(records) == 30
            if engine.state.halted:
                after = records[engine.state.halted_at:]
                assert all(r.post_halt and not r.stable for r in after)

    def test_halt_is_counted(self, thresholds):
        params = derive_subsamp_params(1, 1.0, 0.05, 0.1, 20)
        ensemble = [thresholds.constant(1), thresholds.constant(0)]
        engine = SubSampEngine(ensemble, thresholds, params, RandomSource(0))
        engine.answer_all(np.full(20, 0.5))
        assert engine.state.halted
        assert metrics_collector.get_metrics()["noise_draws_total"] >= engine.state.halted_at

    def test_halted_state_rejects_direct_votes(self, thresholds, rng):
        state = _state(thresholds, 1, 1, 0.0)
        state.halted = True
        with pytest.raises(InvalidArgumentError):
            vote_and_test(state, 0.5, 1.0, 0.0, rng)


class TestRunners:
    def test_no_queries(self, thresholds, rng):
        S = _noisy_sample(100, 4, gamma=0.0)
        assert run_subsamp(S, 0, [], thresholds, None, 1, 1.0, 0.05, 0.1, rng) == []

    def test_query_count_mismatch(self, thresholds, rng):
        S = _noisy_sample(100, 4, gamma=0.0)
        with pytest.raises(InvalidArgumentError):
            run_subsamp(S, 3, [0.1, 0.2], thresholds, None, 1, 1.0, 0.05, 0.1, rng)

    def test_subsamp_too_small_reports_minimal_n(self, thresholds, rng):
        S = _noisy_sample(100, 4, gamma=0.0)
        k = derive_subsamp_params(1, 1.0, 0.05, 0.1, 3).k
        assert k > 100
        with pytest.raises(InfeasibleParametersError) as exc_info:
            run_subsamp(S, 3, [0.1, 0.2, 0.3], thresholds, None, 1, 1.0, 0.05, 0.1, rng)
        assert exc_info.value.minimal_n == k
        assert exc_info.value.details["available"] == 100

    def test_realizable_subsamp_matches_truth(self, thresholds):
        S = _noisy_sample(20000, 5, gamma=0.0)
        queries = np.asarray(RandomSource(6).uniform(200))
        T = unstable_cutoff(0.1, 0.1, 200)
        records = run_subsamp(S, 200, queries, thresholds, None, T, 1.0, 0.05, 0.1, RandomSource(7), 0.001)
        truth = predict(thresholds.threshold(0.5), queries)
        mismatch = np.mean([r.label != y for r, y in zip(records, truth.tolist())])
        assert mismatch <= 0.1
        assert [r.index for r in records] == list(range(1, 201))

    def test_agnostic_pipeline_runs_stages_in_order(self, thresholds):
        S = _noisy_sample(56000, 8)
        queries = UnlabeledDataset(np.asarray(RandomSource(9).uniform(50)))
        outcome = execute_agnostic_pcqr(
            S, 50, queries, thresholds, None, 1.0, 0.05, 0.1, 0.1, RandomSource(10), 0.001
        )
        assert outcome.stages == list(PIPELINE_STAGES)
        assert len(outcome.records) == 50
        assert outcome.agnostic.n_prime == 1000
        assert len(outcome.ensemble) == outcome.subsamp.k
        assert outcome.unstable_count == outcome.records[-1].c

    def test_agnostic_pipeline_is_deterministic(self, thresholds):
        S = _noisy_sample(56000, 8)
        queries = np.asarray(RandomSource(9).uniform(50))
        runs = [
            run_agnostic_pcqr(S, 50, queries, thresholds, None, 1.0, 0.05, 0.1, 0.1, RandomSource(10), 0.001)
            for _ in range(2)
        ]
        assert runs[0] == runs[1]
