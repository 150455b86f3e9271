"""
Hypothesis operations for privquery.

Vectorized evaluation, dichotomy enumeration with canonical
representatives, exact empirical risk minimization, and exact expected
error and disagreement against synthetic distributions.
"""

import math
from functools import partial
from typing import Callable, Sequence, Union

import numpy as np
import structlog

from privquery.models.dataset import Label, LabeledDataset, UnlabeledDataset
from privquery.models.hypothesis import (
    CONTINUOUS_KINDS,
    DichotomyCover,
    FamilyKind,
    Hypothesis,
    HypothesisFamily,
    MarginalKind,
    SyntheticDistribution,
)
from privquery.utils.exceptions import (
    InvalidArgumentError,
    VerificationError,
    raise_unsupported,
)

logger = structlog.get_logger(__name__)

Learner = Callable[[LabeledDataset], Hypothesis]
Points = Union[np.ndarray, Sequence[float], Sequence[int]]


def _token_positions(tokens: Sequence[int], x: np.ndarray) -> np.ndarray:
    """Index of each ``x`` in ``tokens``; raises on unknown tokens."""
    tok = np.asarray(tokens, dtype=np.int64)
    order = np.argsort(tok, kind="stable")
    sorted_tok = tok[order]
    xi = np.asarray(x)
    if xi.size and not np.issubdtype(xi.dtype, np.integer):
        if not np.all(np.equal(np.mod(xi, 1), 0)):
            raise InvalidArgumentError("finite families take integer tokens", argument="x")
    xi = xi.astype(np.int64)
    pos = np.searchsorted(sorted_tok, xi)
    pos_clipped = np.minimum(pos, len(sorted_tok) - 1)
    if xi.size and not np.all(sorted_tok[pos_clipped] == xi):
        bad = xi[sorted_tok[pos_clipped] != xi]
        raise InvalidArgumentError("point outside the family's token domain", argument="x", value=int(bad[0]))
    return order[pos_clipped]


def _check_continuous_domain(low: float, high: float, x: np.ndarray) -> np.ndarray:
    xs = np.asarray(x, dtype=np.float64)
    if xs.size and (np.any(xs < low) or np.any(xs > high) or not np.all(np.isfinite(xs))):
        bad = xs[(xs < low) | (xs > high) | ~np.isfinite(xs)]
        raise InvalidArgumentError(
            f"point outside domain [{low}, {high}]", argument="x", value=float(bad[0])
        )
    return xs


def predict(h: Hypothesis, x: Points) -> np.ndarray:
    """Labels of ``h`` on every point of ``x`` as an int8 array."""
    if h.family is FamilyKind.FINITE:
        pos = _token_positions(h.tokens, np.asarray(x))
        return np.asarray(h.table, dtype=np.int8)[pos]
    xs = _check_continuous_domain(h.low, h.high, np.asarray(x))
    if h.family is FamilyKind.THRESHOLD:
        return (xs >= h.params[0]).astype(np.int8)
    a, b = h.params
    return ((xs >= a) & (xs <= b)).astype(np.int8)


def evaluate(h: Hypothesis, x: Union[float, int]) -> Label:
    """Label of ``h`` at a single point."""
    return Label(int(predict(h, np.asarray([x]))[0]))


def predict_many(family: HypothesisFamily, params: np.ndarray, x: Union[float, int]) -> np.ndarray:
    """Labels of many members of ``family`` at one point, one per parameter row."""
    if family.kind is FamilyKind.FINITE:
        pos = _token_positions(family.tokens, np.asarray([x]))[0]
        tables = np.asarray(family.tables, dtype=np.int8)
        return tables[params[:, 0].astype(np.int64), pos]
    xv = float(_check_continuous_domain(family.low, family.high, np.asarray([x]))[0])
    if family.kind is FamilyKind.THRESHOLD:
        return (xv >= params[:, 0]).astype(np.int8)
    return ((xv >= params[:, 0]) & (xv <= params[:, 1])).astype(np.int8)


def sauer_bound(n: int, d: int) -> int:
    """Growth-function bound: sum of C(n, i) for i <= d."""
    return sum(math.comb(n, i) for i in range(0, d + 1))


def sauer_exponential_bound(n: int, d: int) -> float:
    """The (e n / d)^d form, a valid bound once n >= d."""
    return (math.e * n / d) ** d


def check_sauer(count: int, n: int, d: int) -> None:
    """Raise if ``count`` dichotomies on ``n`` points break Sauer's lemma."""
    if count > sauer_bound(n, d) or (n >= d and count > sauer_exponential_bound(n, d)):
        raise VerificationError(
            f"{count} dichotomies on {n} points exceeds the Sauer bound for d={d}",
            check="sauer",
            instance={"count": count, "n": n, "d": d},
        )


def _midpoint_above(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """A cut ``c`` with ``lower < c <= upper``, preferring the midpoint."""
    mid = (lower + upper) / 2.0
    return np.where(mid > lower, mid, upper)


def _midpoint_below(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """A cut ``c`` with ``lower <= c < upper``, preferring the midpoint."""
    mid = (lower + upper) / 2.0
    return np.where(mid < upper, mid, lower)


def _threshold_cover_params(family: HypothesisFamily, pts: np.ndarray) -> np.ndarray:
    cuts = _midpoint_above(pts[:-1], pts[1:])
    above_max = np.nextafter(family.high, np.inf)
    return np.concatenate(([family.low], cuts, [above_max])).reshape(-1, 1)


def _interval_cover_params(family: HypothesisFamily, pts: np.ndarray) -> np.ndarray:
    u = len(pts)
    left = np.empty(u)
    right = np.empty(u)
    left[0] = family.low
    right[-1] = family.high
    if u > 1:
        left[1:] = _midpoint_above(pts[:-1], pts[1:])
        right[:-1] = _midpoint_below(pts[:-1], pts[1:])
    i, j = np.triu_indices(u)
    blocks = np.column_stack((left[i], right[j]))
    empty = np.array([[family.high, family.low]])
    return np.vstack((empty, blocks))


def _finite_cover_params(family: HypothesisFamily, pts: np.ndarray) -> np.ndarray:
    pos = _token_positions(family.tokens, pts)
    patterns = np.asarray(family.tables, dtype=np.int8)[:, pos]
    _, first = np.unique(patterns, axis=0, return_index=True)
    return np.sort(first).astype(np.float64).reshape(-1, 1)


def enumerate_dichotomies(family: HypothesisFamily, S_u: UnlabeledDataset) -> DichotomyCover:
    """One canonical representative per dichotomy the family realizes on ``S_u``.

    Enumeration works on the distinct points of ``S_u``. Thresholds yield the
    low end of the domain, every gap midpoint, and a cut just above the
    domain maximum, in ascending order. Intervals yield the empty interval
    followed by one interval per contiguous block of points. Finite families
    yield the lowest-index member of each label pattern.
    """
    if len(S_u) < 1:
        raise InvalidArgumentError("cannot enumerate dichotomies on an empty set", argument="S_u", value=0)
    pts = S_u.distinct()
    if family.kind is FamilyKind.THRESHOLD:
        _check_continuous_domain(family.low, family.high, pts)
        params = _threshold_cover_params(family, pts.astype(np.float64))
    elif family.kind is FamilyKind.INTERVAL:
        _check_continuous_domain(family.low, family.high, pts)
        params = _interval_cover_params(family, pts.astype(np.float64))
    elif family.kind is FamilyKind.FINITE:
        params = _finite_cover_params(family, pts)
    else:  # pragma: no cover
        raise_unsupported(f"no enumerator for {family.kind}", operation="enumerate_dichotomies")

    check_sauer(len(params), len(pts), family.vc_dimension)
    logger.debug("Enumerated dichotomies", family=family.kind.value, points=len(pts), cover_size=len(params))
    return DichotomyCover(family=family, support=UnlabeledDataset(pts), params=params)


def mistakes_for_params(family: HypothesisFamily, params: np.ndarray, S: LabeledDataset) -> np.ndarray:
    """Integer mistake count on ``S`` for every parameter row of ``family``."""
    params = np.asarray(params, dtype=np.float64)
    if params.ndim == 1:
        params = params.reshape(-1, 1)
    y = S.y.astype(np.int64)
    if family.kind is FamilyKind.FINITE:
        pos = _token_positions(family.tokens, S.x)
        tables = np.asarray(family.tables, dtype=np.int8)[params[:, 0].astype(np.int64)]
        return (tables[:, pos] != y).sum(axis=1).astype(np.int64)

    order = np.argsort(S.x, kind="stable")
    xs = S.x[order].astype(np.float64)
    ys = y[order]
    cum_ones = np.concatenate(([0], np.cumsum(ys)))
    cum_zeros = np.arange(len(ys) + 1) - cum_ones
    total_ones = int(cum_ones[-1])
    total_zeros = len(ys) - total_ones

    if family.kind is FamilyKind.THRESHOLD:
        below = np.searchsorted(xs, params[:, 0], side="left")
        return cum_ones[below] + (total_zeros - cum_zeros[below])

    lo = np.searchsorted(xs, params[:, 0], side="left")
    hi = np.maximum(np.searchsorted(xs, params[:, 1], side="right"), lo)
    ones_inside = cum_ones[hi] - cum_ones[lo]
    zeros_inside = cum_zeros[hi] - cum_zeros[lo]
    return (total_ones - ones_inside) + zeros_inside


def cover_mistakes(cover: DichotomyCover, S: LabeledDataset) -> np.ndarray:
    return mistakes_for_params(cover.family, cover.params, S)


def lexicographic_argmin(values: np.ndarray, params: np.ndarray) -> int:
    """Row minimizing ``values``; ties go to the smallest parameter vector."""
    best = np.flatnonzero(values == values.min())
    if len(best) == 1:
        return int(best[0])
    tied = params[best]
    order = np.lexsort(tied.T[::-1])
    return int(best[order[0]])


def erm(family: HypothesisFamily, S: LabeledDataset) -> Hypothesis:
    """Empirical risk minimizer over ``family`` with the lexicographic tie-break."""
    if len(S) < 1:
        raise InvalidArgumentError("ERM needs a nonempty dataset", argument="S", value=0)
    cover = enumerate_dichotomies(family, S.unlabeled())
    mistakes = cover_mistakes(cover, S)
    return cover[lexicographic_argmin(mistakes, cover.params)]


def erm_learner(family: HypothesisFamily) -> Learner:
    """The non-private PAC learner oracle, instantiated as exact ERM."""
    return partial(erm, family)


def _indicator_span(h: Hypothesis, low: float, high: float) -> tuple[float, float]:
    """The set where ``h`` predicts 1, clipped to ``[low, high]``."""
    if h.family is FamilyKind.THRESHOLD:
        return max(h.params[0], low), high
    a, b = h.params
    return max(a, low), min(b, high)


def expected_disagreement(h1: Hypothesis, h2: Hypothesis, D: SyntheticDistribution) -> float:
    """Exact probability under ``D``'s marginal that ``h1`` and ``h2`` differ."""
    marginal = D.marginal
    if marginal.kind is MarginalKind.DISCRETE:
        points = np.asarray(marginal.points)
        if h1.family is FamilyKind.FINITE or h2.family is FamilyKind.FINITE:
            points = points.astype(np.int64)
        differ = predict(h1, points) != predict(h2, points)
        return float(np.dot(np.asarray(marginal.weights), differ))

    if h1.family not in CONTINUOUS_KINDS or h2.family not in CONTINUOUS_KINDS:
        raise_unsupported(
            "finite families have no closed form under a uniform marginal",
            operation="expected_disagreement",
        )
    low, high = marginal.low, marginal.high
    a1, b1 = _indicator_span(h1, low, high)
    a2, b2 = _indicator_span(h2, low, high)
    len1 = max(0.0, b1 - a1)
    len2 = max(0.0, b2 - a2)
    overlap = max(0.0, min(b1, b2) - max(a1, a2))
    return float((len1 + len2 - 2.0 * overlap) / (high - low))


def expected_error(h: Hypothesis, D: SyntheticDistribution) -> float:
    """err(h; D) under the symmetric label-noise model."""
    dis = expected_disagreement(h, D.truth, D)
    gamma = D.noise_rate
    return (1.0 - gamma) * dis + gamma * (1.0 - dis)
