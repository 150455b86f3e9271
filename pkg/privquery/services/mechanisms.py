"""
Differential-privacy primitives for privquery.

Laplace noise by inverse CDF, the exponential mechanism sampled with the
Gumbel-max trick, its exact output distribution, and the noisy
distance-to-instability test.
"""

import math
from typing import Union

import numpy as np
import structlog
from scipy.special import logsumexp

from privquery.core.logging import noise_logger
from privquery.core.monitoring import metrics_collector
from privquery.core.random import RandomSource
from privquery.models.engine import (
    LaplaceNoise,
    ScoredCandidateSet,
    StabilityOutcome,
    StabilityQuery,
)
from privquery.models.hypothesis import Hypothesis
from privquery.utils.exceptions import InvalidArgumentError

logger = structlog.get_logger(__name__)


def laplace_inverse_cdf(u: Union[float, np.ndarray], b: float) -> Union[float, np.ndarray]:
    """Map a uniform on (0, 1) to a Laplace(0, b) draw."""
    centered = np.asarray(u, dtype=np.float64) - 0.5
    value = -b * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))
    return float(value) if np.ndim(value) == 0 else value


def laplace_sample(rng: RandomSource, b: Union[float, LaplaceNoise]) -> float:
    """One draw from the Laplace distribution with scale ``b``."""
    scale = b.scale if isinstance(b, LaplaceNoise) else b
    if not (scale > 0 and math.isfinite(scale)):
        raise InvalidArgumentError("Laplace scale must be positive", argument="b", value=scale)
    value = float(laplace_inverse_cdf(rng.uniform_open(), scale))
    metrics_collector.increment_counter("noise_draws_total")
    noise_logger.log_draw("laplace", scale, value, stage=rng.stage)
    return value


def laplace_samples(rng: RandomSource, b: float, size: int) -> np.ndarray:
    """Vectorized Laplace draws, used by the statistical checks."""
    if not (b > 0 and math.isfinite(b)):
        raise InvalidArgumentError("Laplace scale must be positive", argument="b", value=b)
    return np.asarray(laplace_inverse_cdf(rng.uniform_open_array(size), b))


def exact_em_distribution(candidates: ScoredCandidateSet) -> np.ndarray:
    """Exact selection probabilities, normalized in log space."""
    logits = candidates.logits
    return np.exp(logits - logsumexp(logits))


def sample_indices(candidates: ScoredCandidateSet, rng: RandomSource, size: int) -> np.ndarray:
    """``size`` independent selections by Gumbel-max."""
    logits = candidates.logits
    noise = rng.gumbel((size, len(logits)))
    return np.argmax(logits[np.newaxis, :] + noise, axis=1)


def select_index(candidates: ScoredCandidateSet, rng: RandomSource) -> int:
    if len(candidates) == 1:
        return 0
    index = int(sample_indices(candidates, rng, 1)[0])
    metrics_collector.increment_counter("noise_draws_total")
    noise_logger.log_draw("gumbel-max", 1.0, float(index), stage=rng.stage, candidates=len(candidates))
    return index


def exponential_mechanism(candidates: ScoredCandidateSet, rng: RandomSource) -> Hypothesis:
    """Select a candidate with probability proportional to ``exp(eps * q / (2 * sensitivity))``."""
    index = select_index(candidates, rng)
    logger.debug(
        "Exponential mechanism selection",
        candidates=len(candidates),
        index=index,
        score=float(candidates.scores[index]),
    )
    return candidates.candidates[index]


def stability_test(query: StabilityQuery, rng: RandomSource) -> StabilityOutcome:
    """Release ``query.value`` iff ``dist + Lap(1/eps_stab)`` exceeds the threshold."""
    noisy = query.dist + laplace_sample(rng, 1.0 / query.eps_stab)
    if noisy > query.threshold:
        return StabilityOutcome(stable=True, value=query.value, noisy_dist=noisy)
    return StabilityOutcome(stable=False, noisy_dist=noisy)
