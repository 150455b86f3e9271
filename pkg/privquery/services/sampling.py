"""
Dataset manipulation primitives for privquery.

Subsampling without replacement, resampling with replacement, and the
empirical error and disagreement rates every stage is scored with.
"""

import numpy as np
import structlog

from privquery.core.random import RandomSource
from privquery.models.dataset import DatasetOrigin, LabeledDataset, UnlabeledDataset
from privquery.models.hypothesis import Hypothesis
from privquery.services.learners import predict
from privquery.utils.exceptions import InvalidArgumentError

logger = structlog.get_logger(__name__)


def sample_without_replacement(S: LabeledDataset, n_prime: int, rng: RandomSource) -> LabeledDataset:
    """Uniformly random size-``n_prime`` subset of ``S`` (partial Fisher-Yates)."""
    n = len(S)
    if not 1 <= n_prime <= n:
        raise InvalidArgumentError(
            f"cannot draw {n_prime} records without replacement from {n}",
            argument="n_prime",
            value=n_prime,
            details={"n_prime": n_prime, "size": n},
        )
    indices = np.arange(n, dtype=np.int64)
    swaps = rng.integers(np.arange(n_prime, dtype=np.int64), n)
    for i, j in enumerate(swaps.tolist()):
        indices[i], indices[j] = indices[j], indices[i]
    return S.take(indices[:n_prime], DatasetOrigin.SUBSAMPLED)


def resample_with_replacement(S: LabeledDataset, count: int, rng: RandomSource) -> LabeledDataset:
    """``count`` independent uniform draws from ``S``."""
    if len(S) < 1:
        raise InvalidArgumentError("cannot resample from an empty dataset", argument="S", value=0)
    if count < 1:
        raise InvalidArgumentError("count must be positive", argument="count", value=count)
    indices = rng.integers(0, len(S), size=count)
    return S.take(indices, DatasetOrigin.RESAMPLED)


def empirical_error(h: Hypothesis, S: LabeledDataset) -> float:
    """Fraction of records of ``S`` that ``h`` mislabels."""
    if len(S) < 1:
        raise InvalidArgumentError("empirical error needs a nonempty dataset", argument="S", value=0)
    return float(np.mean(predict(h, S.x) != S.y))


def empirical_disagreement(h1: Hypothesis, h2: Hypothesis, S_u: UnlabeledDataset) -> float:
    """Fraction of points of ``S_u`` on which ``h1`` and ``h2`` differ."""
    if len(S_u) < 1:
        raise InvalidArgumentError("empirical disagreement needs a nonempty dataset", argument="S_u", value=0)
    return float(np.mean(predict(h1, S_u.points) != predict(h2, S_u.points)))
