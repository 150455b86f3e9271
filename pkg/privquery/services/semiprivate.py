"""
Semi-private cover learner and the universal query-release wrapper.

After the first ``m_o`` queries have been answered privately, their feature
points serve as a public unlabeled set. A hypothesis is selected from the
cover they induce with the exponential mechanism, and every later query is
answered by that hypothesis with no further noise.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
import structlog

from privquery.core.random import RandomSource
from privquery.models.dataset import AccuracyTarget, Label, LabeledDataset, UnlabeledDataset
from privquery.models.engine import (
    AnswerRecord,
    CoverLearnerResult,
    PublicUnlabeledSet,
    ScoredCandidateSet,
)
from privquery.models.hypothesis import DichotomyCover, HypothesisFamily
from privquery.services.learners import Learner, cover_mistakes, enumerate_dichotomies, predict
from privquery.services.mechanisms import select_index
from privquery.services.pcqr import (
    SUBSAMPLE_DIVISOR,
    PipelineOutcome,
    Queries,
    agnostic_n_prime,
    ceil_int,
    execute_agnostic_pcqr,
    minimal_feasible_n,
    query_points,
)
from privquery.utils.exceptions import InvalidArgumentError, require_positive

logger = structlog.get_logger(__name__)

PUBLIC_SET_CONSTANT = 32.0


def public_set_size(d: int, alpha: float, beta: float) -> int:
    """m_o = ceil(32 (d ln(1/alpha) + ln(1/beta)) / alpha)."""
    target = AccuracyTarget.checked(alpha=alpha, beta=beta)
    spread = d * math.log(1.0 / target.alpha) + math.log(1.0 / target.beta)
    return ceil_int(PUBLIC_SET_CONSTANT * spread / target.alpha)


def universal_sample_size(d: int, eps: float, delta: float, alpha: float, beta: float) -> int:
    """Private sample size for the universal wrapper; independent of the query count."""
    m_o = public_set_size(d, alpha, beta)
    accuracy_term = math.sqrt(d) * alpha * math.sqrt(math.log(1.0 / alpha))
    n_prime = agnostic_n_prime(d, delta, alpha, beta, m_o, accuracy_term)
    return ceil_int(SUBSAMPLE_DIVISOR * n_prime / eps)


def minimal_universal_n(
    d: int, eps: float, delta: float, alpha: float, beta: float, m: int, scale_factor: float = 1.0
) -> int:
    """Smallest runnable n; stops growing once ``m`` reaches ``m_o``."""
    m_prime = min(m, public_set_size(d, alpha, beta))
    return minimal_feasible_n(eps, delta, alpha, beta, m_prime, scale_factor)


def build_cover(family: HypothesisFamily, T_pub: Union[PublicUnlabeledSet, UnlabeledDataset]) -> DichotomyCover:
    """Cover of the distinct public points."""
    points = T_pub.points if isinstance(T_pub, PublicUnlabeledSet) else T_pub
    if len(points) < 1:
        raise InvalidArgumentError("public set must be nonempty", argument="T_pub", value=0)
    return enumerate_dichotomies(family, UnlabeledDataset(points.distinct()))


def sspp_learn(
    S: LabeledDataset,
    T_pub: Union[PublicUnlabeledSet, UnlabeledDataset],
    family: HypothesisFamily,
    eps: float,
    rng: RandomSource,
) -> CoverLearnerResult:
    """Select ``h_priv`` from the public cover, scored privately on ``S``."""
    if len(S) < 1:
        raise InvalidArgumentError("private sample must be nonempty", argument="S", value=0)
    require_positive(eps, "eps")
    cover = build_cover(family, T_pub)
    errors = cover_mistakes(cover, S) / len(S)
    index = select_index(ScoredCandidateSet.from_errors(cover, errors, len(S), eps), rng)
    logger.debug("Selected cover hypothesis", cover_size=len(cover), index=index, error=float(errors[index]))
    return CoverLearnerResult(h_priv=cover[index], cover_size=len(cover), cover_index=index)


@dataclass(frozen=True, eq=False)
class UniversalOutcome:
    records: List[AnswerRecord]
    phase_one: PipelineOutcome
    m_o: int
    phase_switch_index: Optional[int]
    learned: Optional[CoverLearnerResult]


def execute_universal(
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
) -> UniversalOutcome:
    """Answer the first ``min(m, m_o)`` queries with the agnostic pipeline, the rest with ``h_priv``."""
    if m < 1:
        raise InvalidArgumentError("m must be at least 1", argument="m", value=m)
    points = query_points(queries)
    if len(points) != m:
        raise InvalidArgumentError(f"expected {m} queries, got {len(points)}", argument="queries", value=len(points))

    m_o = public_set_size(family.vc_dimension, alpha, beta)
    m_prime = min(m_o, m)
    phase_one = execute_agnostic_pcqr(
        S, m_prime, points[:m_prime], family, learner, eps, delta, alpha, beta, rng.fork("agnostic"), scale_factor
    )
    records = list(phase_one.records)
    if m_prime < m_o:
        return UniversalOutcome(records, phase_one, m_o, None, None)

    public = PublicUnlabeledSet(UnlabeledDataset(points[:m_o]))
    learned = sspp_learn(S, public, family, eps, rng.fork("sspp"))
    tail = points[m_o:]
    labels = predict(learned.h_priv, tail) if len(tail) else np.empty(0, dtype=np.int8)
    for offset, (x, y) in enumerate(zip(tail.tolist(), labels.tolist())):
        records.append(
            AnswerRecord(
                index=m_o + 1 + offset,
                query=x,
                label=Label(y),
                stable=True,
                c=phase_one.unstable_count,
            )
        )
    logger.debug("Universal phase switch", m_o=m_o, tail=len(tail), cover_size=learned.cover_size)
    return UniversalOutcome(records, phase_one, m_o, m_o, learned)


def run_universal(
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
    """Answer any number of queries; always ``m`` records."""
    return execute_universal(
        S, m, queries, family, learner, eps, delta, alpha, beta, rng, scale_factor
    ).records
