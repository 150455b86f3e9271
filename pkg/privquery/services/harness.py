"""
Experiment harness for privquery.

Generates synthetic data, runs trials in every mode, aggregates results and
runs parameter sweeps. Hidden query labels are only read when scoring; the
engines receive feature points alone.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from privquery.core.config import settings
from privquery.core.logging import bind_trial_context, clear_trial_context, log_exception, trial_logger
from privquery.core.monitoring import metrics_collector, record_failure_metrics, record_trial_metrics
from privquery.core.random import RandomSource
from privquery.models.dataset import LabeledDataset, QueryStream
from privquery.models.engine import AnswerRecord
from privquery.models.experiment import ExperimentConfig, Mode, SummaryStats, SweepConfig, TrialResult
from privquery.models.hypothesis import (
    FamilyKind,
    Hypothesis,
    HypothesisFamily,
    Marginal,
    MarginalKind,
    SyntheticDistribution,
)
from privquery.services.learners import erm, expected_error, predict, predict_many
from privquery.services.pcqr import (
    agnostic_sample_size,
    derive_agnostic_params,
    derive_subsamp_params,
    execute_agnostic_pcqr,
    execute_subsamp,
    minimal_feasible_n,
    unstable_cutoff,
)
from privquery.services.relabel import relabel
from privquery.services.sampling import sample_without_replacement
from privquery.services.semiprivate import execute_universal, minimal_universal_n, public_set_size
from privquery.utils.exceptions import InfeasibleParametersError, InvalidArgumentError, PrivQueryException

logger = structlog.get_logger(__name__)

# Interval covers grow quadratically; larger references are skipped.
MAX_REFERENCE_COVER = 2_000_000


def draw_points(marginal: Marginal, count: int, rng: RandomSource) -> np.ndarray:
    """``count`` i.i.d. feature points from ``marginal``."""
    if marginal.kind is MarginalKind.UNIFORM:
        return marginal.low + (marginal.high - marginal.low) * np.asarray(rng.uniform(count))
    points = np.asarray(marginal.points)
    picks = rng.generator.choice(len(points), size=count, p=np.asarray(marginal.weights))
    return points[picks]


def _labels_with_noise(D: SyntheticDistribution, x: np.ndarray, rng: RandomSource) -> np.ndarray:
    clean = predict(D.truth, x)
    flips = np.asarray(rng.uniform(len(x))) < D.noise_rate
    return np.bitwise_xor(clean, flips.astype(np.int8))


def _typed_points(D: SyntheticDistribution, x: np.ndarray) -> np.ndarray:
    return x.astype(np.int64) if D.truth.family is FamilyKind.FINITE else x.astype(np.float64)


def gen_synthetic(D: SyntheticDistribution, n: int, rng: RandomSource) -> LabeledDataset:
    """``n`` examples with x from the marginal and h*(x) flipped with probability gamma."""
    if n < 1:
        raise InvalidArgumentError("n must be at least 1", argument="n", value=n)
    x = _typed_points(D, draw_points(D.marginal, n, rng))
    return LabeledDataset(x, _labels_with_noise(D, x, rng))


def draw_query_stream(D: SyntheticDistribution, m: int, rng: RandomSource) -> QueryStream:
    """Queries drawn jointly with their hidden labels."""
    sample = gen_synthetic(D, m, rng)
    return QueryStream(points=sample.unlabeled(), hidden_labels=sample.y)


def _cover_is_small(family: HypothesisFamily, S: LabeledDataset) -> bool:
    if family.kind is not FamilyKind.INTERVAL:
        return True
    u = len(np.unique(S.x))
    return u * (u + 1) // 2 + 1 <= MAX_REFERENCE_COVER


def _reference_error(family: HypothesisFamily, S: LabeledDataset, D: SyntheticDistribution) -> Optional[float]:
    if not _cover_is_small(family, S):
        return None
    return expected_error(erm(family, S), D)


def derived_constants(config: ExperimentConfig) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """(canonical, scaled) pipeline constants for the manifest."""
    d = config.build_family().vc_dimension
    eps, delta, alpha, beta = config.epsilon, config.delta, config.alpha, config.beta
    m = config.m
    if config.mode is Mode.UNIVERSAL:
        m = min(m, public_set_size(d, alpha, beta))
    canonical: Dict[str, Any] = {"m_effective": m}
    scaled: Dict[str, Any] = {}
    try:
        if config.mode is Mode.SUBSAMP:
            T, engine_eps, engine_delta = unstable_cutoff(alpha, beta, m), eps, delta
        else:
            agnostic = derive_agnostic_params(eps, delta, alpha, beta, m, config.n)
            T, engine_eps, engine_delta = agnostic.T, agnostic.eps_hat, agnostic.delta_hat
            canonical.update(
                n_prime=agnostic.n_prime,
                eps_prime=agnostic.eps_prime,
                eps_hat=agnostic.eps_hat,
                delta_hat=agnostic.delta_hat,
            )
        params = derive_subsamp_params(T, engine_eps, engine_delta, beta, m, config.scale_factor)
    except PrivQueryException as exc:
        canonical["error"] = exc.message
        return canonical, scaled

    canonical.update(T=T, **{"lambda": params.lam_canonical}, k=params.k_canonical, w=params.w_canonical)
    scaled.update(**{"lambda": params.lam}, k=params.k, w=params.w, scale_factor=params.scale_factor)
    if config.mode is Mode.UNIVERSAL:
        canonical["m_o"] = public_set_size(d, alpha, beta)
        canonical["minimal_n"] = minimal_universal_n(d, eps, delta, alpha, beta, config.m)
        scaled["minimal_n"] = minimal_universal_n(d, eps, delta, alpha, beta, config.m, config.scale_factor)
    elif config.mode is not Mode.SUBSAMP:
        canonical["minimal_n"] = minimal_feasible_n(eps, delta, alpha, beta, m)
        scaled["minimal_n"] = minimal_feasible_n(eps, delta, alpha, beta, m, config.scale_factor)
        canonical["sufficient_n"] = agnostic_sample_size(d, eps, delta, alpha, beta, m)
    return canonical, scaled


@dataclass(frozen=True, eq=False)
class TrialRun:
    result: TrialResult
    trace: List[Dict[str, Any]] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)
    sample: Optional[LabeledDataset] = None
    queries: Optional[LabeledDataset] = None


def _trace_lines(
    trial: int, records: Sequence[AnswerRecord], hidden: np.ndarray
) -> List[Dict[str, Any]]:
    return [
        {
            "trial": trial,
            "j": r.index,
            "x": r.query,
            "y_true": int(y),
            "y_priv": int(r.label),
            "stable": r.stable,
            "post_halt": r.post_halt,
            "c": r.c,
            "dist": r.dist,
        }
        for r, y in zip(records, hidden.tolist())
    ]


def _majority_labels(
    family: HypothesisFamily, ensemble: Sequence[Hypothesis], points: np.ndarray
) -> np.ndarray:
    params = np.asarray([h.params for h in ensemble], dtype=np.float64)
    k = len(ensemble)
    votes = [int(predict_many(family, params, x).sum()) for x in points.tolist()]
    return (2 * np.asarray(votes, dtype=np.int64) > k).astype(np.int8)


def _relabel_only(
    config: ExperimentConfig,
    family: HypothesisFamily,
    D: SyntheticDistribution,
    S: LabeledDataset,
    rng: RandomSource,
    trial: int,
    gamma: float,
) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    agnostic = derive_agnostic_params(config.epsilon, config.delta, config.alpha, config.beta, config.m, config.n)
    S_prime = sample_without_replacement(S, agnostic.n_prime, rng.fork("subsample"))
    result = relabel(S_prime, family, rng.fork("relabel"))
    chosen_error = expected_error(result.chosen, D)
    erm_sub_error = expected_error(erm(family, S_prime), D)
    fields = {
        "avg_error": chosen_error,
        "excess": chosen_error - erm_sub_error,
        "hypothesis_error": chosen_error,
        "cover_size": result.cover_size,
        "chosen": result.chosen.describe(),
        "params": {"n_prime": agnostic.n_prime, "relabel_erm_error": erm_sub_error},
    }
    summary = {"trial": trial, "stage": "relabel", **result.summary(), "gamma": gamma}
    return fields, [summary]


def execute_trial(
    config: ExperimentConfig, trial: int, trace: bool = False, keep_data: bool = False
) -> TrialRun:
    """Run trial ``trial`` of ``config``; a pure function of both.

    With ``keep_data`` the private sample and the labeled query set travel
    back on the ``TrialRun``.
    """
    started = time.perf_counter()
    checkpoint = metrics_collector.checkpoint()
    root = RandomSource(config.seed)
    trial_rng = root.child(trial, "trial")
    family = config.build_family()
    D = config.build_distribution()
    bind_trial_context(trial=trial, seed=config.seed, mode=config.mode.value)
    trial_logger.log_trial_started(trial, config.mode.value, config.seed, name=config.name)
    try:
        S = gen_synthetic(D, config.n, trial_rng.fork("data"))
        gamma = expected_error(D.truth, D)
        algo_rng = trial_rng.fork("algorithm")
        fields: Dict[str, Any] = {"erm_error": _reference_error(family, S, D)}
        lines: List[Dict[str, Any]] = []
        stream: Optional[QueryStream] = None

        if config.mode is Mode.RELABEL_ONLY:
            extra, lines = _relabel_only(config, family, D, S, algo_rng, trial, gamma)
            fields.update(extra)
        else:
            stream = draw_query_stream(D, config.m, trial_rng.fork("queries"))
            fields_engine, lines = _run_engine_mode(config, family, D, S, stream, algo_rng, trial, gamma)
            fields.update(fields_engine)

        elapsed = time.perf_counter() - started
        result = TrialResult(
            trial=trial,
            seed=config.seed,
            mode=config.mode,
            gamma=gamma,
            elapsed_seconds=elapsed,
            **fields,
        )
        trial_logger.log_trial_completed(
            trial, result.avg_error, result.excess, result.halted_at, round(elapsed, 4)
        )
        queries = None
        if keep_data and stream is not None:
            queries = LabeledDataset(stream.points.points, stream.hidden_labels)
        return TrialRun(
            result=result,
            trace=lines if trace else [],
            metrics=metrics_collector.delta_since(checkpoint),
            sample=S if keep_data else None,
            queries=queries,
        )
    finally:
        clear_trial_context()


def _run_engine_mode(
    config: ExperimentConfig,
    family: HypothesisFamily,
    D: SyntheticDistribution,
    S: LabeledDataset,
    stream: QueryStream,
    algo_rng: RandomSource,
    trial: int,
    gamma: float,
) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    points = stream.points.points
    args = (config.epsilon, config.delta)
    summary: Dict[str, Any] = {"n": config.n, "scale_factor": config.scale_factor}
    fields: Dict[str, Any] = {}
    relabel_h: Optional[Hypothesis] = None
    engine_count = config.m

    if config.mode is Mode.SUBSAMP:
        T = unstable_cutoff(config.alpha, config.beta, config.m)
        outcome = execute_subsamp(
            S, config.m, stream.points, family, None, T, *args, config.beta, algo_rng, config.scale_factor
        )
        records, params, ensemble = outcome.records, outcome.params, outcome.state.ensemble
        halted_at, unstable = outcome.state.halted_at, outcome.state.c
        summary.update(n_prime=None)
    elif config.mode is Mode.AGNOSTIC:
        pipeline = execute_agnostic_pcqr(
            S, config.m, stream.points, family, None, *args, config.alpha, config.beta, algo_rng, config.scale_factor
        )
        records, params, ensemble = pipeline.records, pipeline.subsamp, pipeline.ensemble
        halted_at, unstable = pipeline.halted_at, pipeline.unstable_count
        relabel_h = pipeline.relabel.chosen
        summary.update(n_prime=pipeline.agnostic.n_prime, stages=pipeline.stages, relabel=pipeline.relabel.summary())
    else:
        universal = execute_universal(
            S, config.m, stream.points, family, None, *args, config.alpha, config.beta, algo_rng, config.scale_factor
        )
        pipeline = universal.phase_one
        records, params, ensemble = universal.records, pipeline.subsamp, pipeline.ensemble
        halted_at, unstable = pipeline.halted_at, pipeline.unstable_count
        relabel_h = pipeline.relabel.chosen
        engine_count = len(pipeline.records)
        summary.update(
            n_prime=pipeline.agnostic.n_prime,
            stages=pipeline.stages,
            relabel=pipeline.relabel.summary(),
            m_o=universal.m_o,
            phase_switch_index=universal.phase_switch_index,
        )
        if universal.learned is not None:
            h_priv = universal.learned.h_priv
            summary.update(cover_size=universal.learned.cover_size, h_priv=h_priv.describe())
            fields.update(
                cover_size=universal.learned.cover_size,
                chosen=h_priv.describe(),
                hypothesis_error=expected_error(h_priv, D),
            )
            tail_priv = np.array([int(r.label) for r in records[universal.m_o:]], dtype=np.int8)
            if len(tail_priv):
                fields["tail_error"] = float(np.mean(tail_priv != stream.hidden_labels[universal.m_o:]))

    y_priv = np.array([int(r.label) for r in records], dtype=np.int8)
    avg_error = hidden_label_error(records, stream)
    engine_points = points[:engine_count]
    engine_priv = y_priv[:engine_count]
    majority = _majority_labels(family, ensemble, engine_points)
    fields["avg_mismatch_vs_majority"] = float(np.mean(engine_priv != majority))
    if relabel_h is not None:
        fields["avg_mismatch_vs_relabel"] = float(np.mean(engine_priv != predict(relabel_h, engine_points)))

    summary.update(
        T=params.T,
        **{"lambda": params.lam},
        k=params.k,
        w=params.w,
        halted_at=halted_at,
        unstable_count=unstable,
        avg_error=avg_error,
    )
    fields.update(
        avg_error=avg_error,
        excess=avg_error - gamma,
        unstable_count=unstable,
        halted_at=halted_at,
        answered=len(records),
        params=params.snapshot(),
    )
    lines = _trace_lines(trial, records, stream.hidden_labels)
    lines.append({"trial": trial, "summary": summary})
    return fields, lines


def run_trial(config: ExperimentConfig, trial: int) -> TrialResult:
    """Result of trial ``trial``; identical on every call with the same inputs."""
    return execute_trial(config, trial).result


def run_trials(
    config: ExperimentConfig,
    workers: Optional[int] = None,
    trace: bool = False,
    keep_data: bool = False,
) -> List[TrialRun]:
    """All trials of ``config``, ordered by trial index."""
    workers = workers or settings.workers
    metrics_collector.set_gauge("workers", workers)
    task = partial(execute_trial, config, trace=trace, keep_data=keep_data)
    indices = range(config.trials)
    if workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(task, indices))
        # Worker processes keep their own collectors.
        for run in runs:
            metrics_collector.merge(run.metrics)
    else:
        runs = [task(i) for i in indices]
    runs.sort(key=lambda run: run.result.trial)
    for run in runs:
        r = run.result
        record_trial_metrics(r.elapsed_seconds, r.avg_error, r.answered, r.unstable_count, r.halted_at)
    return runs


def summarize(config: ExperimentConfig, results: Sequence[TrialResult]) -> SummaryStats:
    return SummaryStats.from_results(config, results)


def monotonicity_report(table: pd.DataFrame, tolerance: int = 1) -> List[Dict[str, Any]]:
    """Median excess against n for each fixed (m, alpha, noise_rate)."""
    report: List[Dict[str, Any]] = []
    usable = table.dropna(subset=["median_excess"])
    for (m, alpha, noise), group in usable.groupby(["m", "alpha", "noise_rate"], sort=True):
        ordered = group.sort_values("n")
        medians = ordered["median_excess"].to_numpy()
        inversions = int(np.sum(np.diff(medians) > 0))
        report.append(
            {
                "m": int(m),
                "alpha": float(alpha),
                "noise_rate": float(noise),
                "n": ordered["n"].astype(int).tolist(),
                "median_excess": medians.tolist(),
                "inversions": inversions,
                "non_increasing": inversions <= tolerance,
            }
        )
    return report


@dataclass(frozen=True, eq=False)
class SweepReport:
    table: pd.DataFrame
    summaries: List[SummaryStats]
    monotonicity: List[Dict[str, Any]]
    unstable_within_budget: bool


def sweep_and_report(sweep: SweepConfig, workers: Optional[int] = None) -> SweepReport:
    """Run every cell of the grid; failing cells are recorded and the sweep continues."""
    summaries: List[SummaryStats] = []
    within_budget = True
    for cell in sweep.cells():
        try:
            runs = run_trials(cell, workers)
        except PrivQueryException as exc:
            log_exception(logger, exc, context={"cell": cell.name, **exc.details})
            record_failure_metrics(isinstance(exc, InfeasibleParametersError))
            summaries.append(SummaryStats.from_results(cell, [], failed=cell.trials, error=exc.message))
            continue
        results = [run.result for run in runs]
        for r in results:
            budget = r.params.get("T")
            if budget is not None and r.unstable_count > budget + 1:
                within_budget = False
        summaries.append(SummaryStats.from_results(cell, results))

    table = pd.DataFrame([s.model_dump(mode="json") for s in summaries])
    return SweepReport(
        table=table,
        summaries=summaries,
        monotonicity=monotonicity_report(table),
        unstable_within_budget=within_budget,
    )


def hidden_label_error(records: Sequence[AnswerRecord], stream: QueryStream) -> float:
    """Average mismatch of released labels against the stream's hidden labels."""
    y_priv = np.array([int(r.label) for r in records], dtype=np.int8)
    return float(np.mean(y_priv != stream.hidden_labels))


__all__ = [
    "SweepReport",
    "TrialRun",
    "derived_constants",
    "draw_points",
    "draw_query_stream",
    "execute_trial",
    "gen_synthetic",
    "hidden_label_error",
    "monotonicity_report",
    "run_trial",
    "run_trials",
    "summarize",
    "sweep_and_report",
]
