"""
Private classification-query release engines for privquery.

The sub-sample engine trains an ensemble on disjoint blocks, answers each
query by a noisy-threshold stability test on the vote margin, and stops
spending budget once more than ``T`` answers were unstable. The agnostic
pipeline runs subsample, relabel, resample and the engine in that order.
"""

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Union

import numpy as np
import structlog

from privquery.core.logging import trial_logger
from privquery.core.monitoring import metrics_collector
from privquery.core.random import RandomSource
from privquery.models.dataset import (
    AccuracyTarget,
    Label,
    LabeledDataset,
    PrivacyBudget,
    UnlabeledDataset,
)
from privquery.models.engine import (
    AgnosticParams,
    AnswerRecord,
    EngineState,
    RelabelResult,
    StabilityQuery,
    SubSampParams,
)
from privquery.models.hypothesis import Hypothesis, HypothesisFamily
from privquery.services.learners import Learner, erm_learner, predict_many
from privquery.services.mechanisms import laplace_sample, stability_test
from privquery.services.relabel import relabel
from privquery.services.sampling import resample_with_replacement, sample_without_replacement
from privquery.utils.exceptions import (
    InvalidArgumentError,
    raise_infeasible,
    require_positive,
    require_probability,
)

logger = structlog.get_logger(__name__)

SUBSAMPLE_DIVISOR = 56
BLOCK_CONSTANT = 34.0 * math.sqrt(2.0)
AGNOSTIC_SAMPLE_CONSTANT = 8000.0
RELABEL_SAMPLE_CONSTANT = 256.0
CONVERGENCE_SAMPLE_CONSTANT = 50.0
_ROUNDING_SLACK = 1e-9

PIPELINE_STAGES = ("subsample", "relabel", "resample", "engine")

Queries = Union[UnlabeledDataset, Sequence[float], np.ndarray]


def floor_int(value: float) -> int:
    return math.floor(value + _ROUNDING_SLACK)


def ceil_int(value: float) -> int:
    return math.ceil(value - _ROUNDING_SLACK)


def query_points(queries: Queries) -> np.ndarray:
    if isinstance(queries, UnlabeledDataset):
        return queries.points
    return UnlabeledDataset(np.asarray(queries)).points


def _check_common(eps: float, delta: float, beta: float, m: int) -> None:
    PrivacyBudget.checked(epsilon=eps, delta=delta)
    require_probability(beta, "beta")
    if m < 1:
        raise InvalidArgumentError("m must be at least 1", argument="m", value=m)


def subsample_size(eps: float, n: int) -> int:
    """floor(eps * n / 56)."""
    return floor_int(eps * n / SUBSAMPLE_DIVISOR)


def unstable_cutoff(alpha: float, beta: float, m: int) -> int:
    """T = ceil(max(1, m*alpha/8 + sqrt(3*m*alpha*ln(m/beta))/4))."""
    m_alpha = m * alpha
    raw = m_alpha / 8.0 + 0.25 * math.sqrt(3.0 * m_alpha * math.log(m / beta))
    return ceil_int(max(1.0, raw))


def derive_agnostic_params(eps: float, delta: float, alpha: float, beta: float, m: int, n: int) -> AgnosticParams:
    """Constants of the agnostic pipeline."""
    _check_common(eps, delta, beta, m)
    AccuracyTarget.checked(alpha=alpha, beta=beta)
    n_prime = subsample_size(eps, n)
    if n_prime < 1:
        minimal = _minimal_n_for(1, eps)
        raise_infeasible(
            f"n={n} gives an empty subsample at eps={eps}; need n >= {minimal}",
            minimal_n=minimal,
            required=1,
            available=n_prime,
        )
    eps_prime = alpha * max(1.0, math.sqrt(m * alpha))
    capped = min(1.0, eps_prime)
    log_term = math.log(2.0 / delta)
    return AgnosticParams(
        n=n,
        n_prime=n_prime,
        T=unstable_cutoff(alpha, beta, m),
        eps_prime=eps_prime,
        eps_hat=capped / log_term,
        delta_hat=delta / (2.0 * math.exp(capped) * log_term),
    )


def derive_subsamp_params(
    T: int, eps: float, delta: float, beta: float, m: int, scale_factor: float = 1.0
) -> SubSampParams:
    """Constants of the sub-sample engine, optionally scaled by ``scale_factor``."""
    _check_common(eps, delta, beta, m)
    require_positive(scale_factor, "scale_factor")
    if T < 1:
        raise InvalidArgumentError("T must be at least 1", argument="T", value=T)
    lam = math.sqrt(32.0 * T * math.log(2.0 / delta)) / eps
    k_exact = BLOCK_CONSTANT * lam * math.log(4.0 * m * T / min(delta, beta / 2.0))
    w = 2.0 * lam * math.log(2.0 * m / delta)
    k_canonical = max(1, ceil_int(k_exact))
    if scale_factor == 1.0:
        scaled_lam, scaled_k, scaled_w = lam, k_canonical, w
    else:
        scaled_lam = scale_factor * lam
        scaled_k = max(1, ceil_int(scale_factor * k_exact))
        scaled_w = scale_factor * w
    return SubSampParams(
        T=T,
        lam=scaled_lam,
        k=scaled_k,
        w=scaled_w,
        scale_factor=scale_factor,
        lam_canonical=lam,
        k_canonical=k_canonical,
        w_canonical=w,
    )


def _minimal_n_for(n_prime: int, eps: float) -> int:
    n = max(1, ceil_int(SUBSAMPLE_DIVISOR * n_prime / eps))
    while subsample_size(eps, n) < n_prime:
        n += 1
    return n


def minimal_feasible_n(
    eps: float, delta: float, alpha: float, beta: float, m: int, scale_factor: float = 1.0
) -> int:
    """Smallest n whose subsample gives every ensemble block at least one record."""
    smallest = derive_agnostic_params(eps, delta, alpha, beta, m, _minimal_n_for(1, eps))
    params = derive_subsamp_params(smallest.T, smallest.eps_hat, smallest.delta_hat, beta, m, scale_factor)
    return _minimal_n_for(params.k, eps)


def relabel_sample_size(d: int, alpha: float, beta: float) -> int:
    """Subsample size at which the relabel step's excess error is at most alpha."""
    return ceil_int(RELABEL_SAMPLE_CONSTANT * (d + math.log(3.0 / beta)) / alpha**2)


def uniform_convergence_size(d: int, alpha: float, beta_prime: float) -> int:
    """Sample size at which empirical disagreement rates are uniformly alpha-close."""
    return ceil_int(CONVERGENCE_SAMPLE_CONSTANT * (d * math.log(1.0 / alpha) + math.log(1.0 / beta_prime)) / alpha**2)


def agnostic_n_prime(d: int, delta: float, alpha: float, beta: float, m: float, accuracy_term: float) -> float:
    complexity = d * math.log(1.0 / alpha) + math.log(m / beta)
    privacy = math.log(2.0 / delta) ** 1.5 * max(1.0, math.log(m * alpha / min(delta, beta / 2.0)))
    return AGNOSTIC_SAMPLE_CONSTANT * complexity * privacy / alpha**2 * max(1.0, accuracy_term)


def agnostic_sample_size(d: int, eps: float, delta: float, alpha: float, beta: float, m: int) -> int:
    """Private sample size sufficient for the agnostic pipeline, unscaled."""
    n_prime = agnostic_n_prime(d, delta, alpha, beta, m, math.sqrt(m) * alpha**1.5)
    return ceil_int(SUBSAMPLE_DIVISOR * n_prime / eps)


def partition_indices(size: int, k: int) -> List[np.ndarray]:
    """``k`` disjoint index blocks of ``size // k`` records, in index order."""
    if k < 1:
        raise InvalidArgumentError("k must be at least 1", argument="k", value=k)
    block = size // k
    if block < 1:
        raise_infeasible(
            f"{size} records cannot fill {k} blocks; need at least {k}",
            minimal_n=k,
            required=k,
            available=size,
        )
    return [np.arange(j * block, (j + 1) * block, dtype=np.int64) for j in range(k)]


def train_on_blocks(S_hat: LabeledDataset, blocks: Sequence[np.ndarray], learner: Learner) -> List[Hypothesis]:
    return [learner(S_hat.take(idx, S_hat.origin)) for idx in blocks]


def train_ensemble(S_hat: LabeledDataset, k: int, learner: Learner) -> List[Hypothesis]:
    """Apply ``learner`` to each of ``k`` disjoint blocks of ``S_hat``."""
    return train_on_blocks(S_hat, partition_indices(len(S_hat), k), learner)


def vote_counts(state: EngineState, x: Union[float, int]) -> tuple[int, int]:
    """(ct(0), ct(1)) over the ensemble at ``x``."""
    ones = int(predict_many(state.family, state.ensemble_params, x).sum())
    return state.k - ones, ones


def vote_and_test(
    state: EngineState, x: Union[float, int], lam: float, w: float, rng: RandomSource
) -> AnswerRecord:
    """Answer one query from the ensemble vote, charging unstable answers to ``c``."""
    if state.halted:
        raise InvalidArgumentError("engine has halted", argument="state", value=state.halted_at)
    ct0, ct1 = vote_counts(state, x)
    majority = 1 if ct1 > ct0 else 0
    dist = abs(ct0 - ct1)
    outcome = stability_test(
        StabilityQuery(value=majority, dist=dist, threshold=state.w_hat, eps_stab=1.0 / (2.0 * lam)),
        rng,
    )
    state.answered += 1
    if outcome.stable:
        label = majority
    else:
        label = rng.bit()
        state.c += 1
        state.w_hat = w + laplace_sample(rng, lam)
        if state.c > state.T:
            state.halted = True
            state.halted_at = state.answered
    return AnswerRecord(
        index=state.answered,
        query=_scalar(x),
        label=Label(label),
        stable=outcome.stable,
        c=state.c,
        dist=float(dist),
    )


def _scalar(x: Union[float, int, np.generic]) -> Union[float, int]:
    return x.item() if isinstance(x, np.generic) else x


class SubSampEngine:
    """Sub-sample-and-aggregate engine with sparse-vector accounting."""

    def __init__(
        self,
        ensemble: Sequence[Hypothesis],
        family: HypothesisFamily,
        params: SubSampParams,
        rng: RandomSource,
    ):
        self.params = params
        self.rng = rng
        w_hat = params.w + laplace_sample(rng, params.lam)
        self.state = EngineState(ensemble=list(ensemble), family=family, T=params.T, w_hat=w_hat)

    @classmethod
    def train(
        cls,
        S_hat: LabeledDataset,
        family: HypothesisFamily,
        learner: Learner,
        params: SubSampParams,
        rng: RandomSource,
    ) -> "SubSampEngine":
        return cls(train_ensemble(S_hat, params.k, learner), family, params, rng)

    def answer(self, x: Union[float, int]) -> AnswerRecord:
        state = self.state
        if state.halted:
            state.answered += 1
            return AnswerRecord(
                index=state.answered,
                query=_scalar(x),
                label=Label(self.rng.bit()),
                stable=False,
                post_halt=True,
                c=state.c,
            )
        record = vote_and_test(state, x, self.params.lam, self.params.w, self.rng)
        if state.halted:
            trial_logger.log_engine_halted(state.answered, state.c, state.T)
        return record

    def answer_all(self, queries: Queries) -> List[AnswerRecord]:
        return [self.answer(x) for x in query_points(queries)]


@dataclass(frozen=True, eq=False)
class EngineOutcome:
    records: List[AnswerRecord]
    params: SubSampParams
    state: EngineState


def execute_subsamp(
    S: LabeledDataset,
    m: int,
    queries: Queries,
    family: HypothesisFamily,
    learner: Optional[Learner],
    T: int,
    eps: float,
    delta: float,
    beta: float,
    rng: RandomSource,
    scale_factor: float = 1.0,
) -> EngineOutcome:
    """Run the sub-sample engine directly on ``S`` and keep its final state."""
    points = query_points(queries)
    if len(points) != m:
        raise InvalidArgumentError(
            f"expected {m} queries, got {len(points)}", argument="queries", value=len(points)
        )
    params = derive_subsamp_params(T, eps, delta, beta, m, scale_factor)
    if len(S) < params.k:
        raise_infeasible(
            f"{len(S)} records cannot fill {params.k} blocks; need at least {params.k}",
            minimal_n=params.k,
            required=params.k,
            available=len(S),
        )
    engine = SubSampEngine.train(S, family, learner or erm_learner(family), params, rng)
    records = engine.answer_all(points)
    return EngineOutcome(records=records, params=params, state=engine.state)


def run_subsamp(
    S: LabeledDataset,
    m: int,
    queries: Queries,
    family: HypothesisFamily,
    learner: Optional[Learner],
    T: int,
    eps: float,
    delta: float,
    beta: float,
    rng: RandomSource,
    scale_factor: float = 1.0,
) -> List[AnswerRecord]:
    """Answer ``m`` queries with the sub-sample engine; always ``m`` records."""
    if m == 0:
        return []
    return execute_subsamp(S, m, queries, family, learner, T, eps, delta, beta, rng, scale_factor).records


@dataclass(frozen=True, eq=False)
class PipelineOutcome:
    records: List[AnswerRecord]
    agnostic: AgnosticParams
    subsamp: SubSampParams
    relabel: RelabelResult
    ensemble: List[Hypothesis]
    halted_at: Optional[int]
    unstable_count: int
    stages: List[str] = field(default_factory=list)


@contextmanager
def _stage(name: str, stages: List[str]) -> Iterator[None]:
    started = time.perf_counter()
    trial_logger.log_stage(name)
    yield
    stages.append(name)
    metrics_collector.record_histogram(f"stage_seconds_{name}", time.perf_counter() - started)


def execute_agnostic_pcqr(
    S: LabeledDataset,
    m: int,
    queries: Queries,
    family: HypothesisFamily,
    learner: Optional[Learner],
    eps: float,
    delta: float,
    alpha: float,
    beta: float,
    rng: RandomSource,
    scale_factor: float = 1.0,
) -> PipelineOutcome:
    """Subsample, relabel, resample, then answer with the sub-sample engine."""
    points = query_points(queries)
    if len(points) != m:
        raise InvalidArgumentError(
            f"expected {m} queries, got {len(points)}", argument="queries", value=len(points)
        )
    agnostic = derive_agnostic_params(eps, delta, alpha, beta, m, len(S))
    subsamp = derive_subsamp_params(agnostic.T, agnostic.eps_hat, agnostic.delta_hat, beta, m, scale_factor)
    if agnostic.n_prime < subsamp.k:
        minimal = _minimal_n_for(subsamp.k, eps)
        raise_infeasible(
            f"subsample of {agnostic.n_prime} cannot fill {subsamp.k} blocks; need n >= {minimal}",
            minimal_n=minimal,
            required=subsamp.k,
            available=agnostic.n_prime,
        )
    learner = learner or erm_learner(family)

    stages: List[str] = []
    with _stage("subsample", stages):
        S_prime = sample_without_replacement(S, agnostic.n_prime, rng.fork("subsample"))
    with _stage("relabel", stages):
        relabeled = relabel(S_prime, family, rng.fork("relabel"))
    with _stage("resample", stages):
        S_hat = resample_with_replacement(relabeled.relabeled, agnostic.n_prime, rng.fork("resample"))
    with _stage("engine", stages):
        engine = SubSampEngine.train(S_hat, family, learner, subsamp, rng.fork("engine"))
        records = engine.answer_all(points)

    logger.debug(
        "Agnostic pipeline finished",
        n=len(S),
        n_prime=agnostic.n_prime,
        k=subsamp.k,
        halted_at=engine.state.halted_at,
        unstable_count=engine.state.c,
    )
    return PipelineOutcome(
        records=records,
        agnostic=agnostic,
        subsamp=subsamp,
        relabel=relabeled,
        ensemble=engine.state.ensemble,
        halted_at=engine.state.halted_at,
        unstable_count=engine.state.c,
        stages=stages,
    )


def run_agnostic_pcqr(
    S: LabeledDataset,
    m: int,
    queries: Queries,
    family: HypothesisFamily,
    learner: Optional[Learner],
    eps: float,
    delta: float,
    alpha: float,
    beta: float,
    rng: RandomSource,
    scale_factor: float = 1.0,
) -> List[AnswerRecord]:
    """Answer ``m`` queries privately from an agnostic sample; always ``m`` records."""
    if m < 1:
        raise InvalidArgumentError("m must be at least 1", argument="m", value=m)
    return execute_agnostic_pcqr(
        S, m, queries, family, learner, eps, delta, alpha, beta, rng, scale_factor
    ).records
