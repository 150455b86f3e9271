"""
Agnostic-to-realizable reduction for privquery.

Selects a hypothesis from the dichotomy cover of the subsample with the
exponential mechanism at privacy parameter 1 and relabels the subsample
with it, so that the output is exactly realizable.
"""

import numpy as np
import structlog

from privquery.core.random import RandomSource
from privquery.models.dataset import DatasetOrigin, LabeledDataset
from privquery.models.engine import RelabelResult, ScoredCandidateSet
from privquery.models.hypothesis import HypothesisFamily
from privquery.services.learners import cover_mistakes, enumerate_dichotomies, predict
from privquery.services.mechanisms import select_index
from privquery.utils.exceptions import InvalidArgumentError

logger = structlog.get_logger(__name__)

# Fixed; the downstream composition depends on it.
RELABEL_EPSILON = 1.0


def relabel(S_prime: LabeledDataset, family: HypothesisFamily, rng: RandomSource) -> RelabelResult:
    """Relabel ``S_prime`` with a privately selected cover representative."""
    n_prime = len(S_prime)
    if n_prime < 1:
        raise InvalidArgumentError("cannot relabel an empty dataset", argument="S_prime", value=0)

    cover = enumerate_dichotomies(family, S_prime.unlabeled())
    mistakes = cover_mistakes(cover, S_prime)
    errors = mistakes / n_prime
    candidates = ScoredCandidateSet.from_errors(cover, errors, n_prime, RELABEL_EPSILON)
    index = select_index(candidates, rng)
    chosen = cover[index]

    relabeled = S_prime.with_labels(predict(chosen, S_prime.x), DatasetOrigin.RELABELED)
    result = RelabelResult(
        relabeled=relabeled,
        chosen=chosen,
        cover_size=len(cover),
        error_before=float(errors[index]),
        erm_error=float(np.min(errors)),
    )
    logger.debug("Relabeled subsample", n_prime=n_prime, **result.summary())
    return result
