"""
Built-in verification suite for privquery.

Each sub-check compares an implementation against an exact or brute-force
oracle and reports the offending instance when it fails. Two mutations can
be switched on to confirm that the chi-square and influence checks detect
the faults they target.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Set

import numpy as np
import structlog
from scipy import stats

from privquery.core.random import RandomSource
from privquery.models.dataset import LabeledDataset, UnlabeledDataset
from privquery.models.engine import EngineState, ScoredCandidateSet
from privquery.models.hypothesis import (
    FamilyKind,
    Hypothesis,
    HypothesisFamily,
    Marginal,
    MarginalKind,
    SyntheticDistribution,
)
from privquery.services.harness import draw_points, gen_synthetic
from privquery.services.learners import (
    enumerate_dichotomies,
    erm_learner,
    expected_disagreement,
    predict,
)
from privquery.services.mechanisms import exact_em_distribution, sample_indices
from privquery.services.pcqr import partition_indices, train_on_blocks, uniform_convergence_size, vote_counts
from privquery.services.relabel import relabel
from privquery.services.sampling import empirical_disagreement, empirical_error
from privquery.utils.exceptions import InvalidArgumentError, PrivQueryException, VerificationError

logger = structlog.get_logger(__name__)

EM_SENSITIVITY_HALVED = "em_sensitivity_halved"
OVERLAPPING_BLOCKS = "overlapping_blocks"
MUTATIONS: FrozenSet[str] = frozenset({EM_SENSITIVITY_HALVED, OVERLAPPING_BLOCKS})

EM_INSTANCES = 20
EM_DRAWS = 100_000
EM_P_VALUE = 0.001
EM_REFERENCE = (0.6897, 0.2537, 0.0566)
EM_REFERENCE_TOLERANCE = 0.01

CONVERGENCE_ALPHA = 0.2
CONVERGENCE_BETA = 0.1
CONVERGENCE_PAIRS = 200
CONVERGENCE_TRIALS = 100

INFLUENCE_SEEDS = 100
INFLUENCE_BLOCKS = 8
INFLUENCE_BLOCK_SIZE = 5
INFLUENCE_QUERIES = 25

SAUER_MAX_N = 12
RELABEL_INPUTS = 1000
RELABEL_NOISE_RATES = (0.1, 0.2, 0.3)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class VerificationReport:
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
        }


# Exponential mechanism


def _em_instances() -> List[Dict[str, Any]]:
    """The reference three-candidate instance followed by fixed random ones."""
    instances: List[Dict[str, Any]] = [{"errors": [0.0, 0.2, 0.5], "n_prime": 10, "eps": 1.0}]
    gen = np.random.default_rng(7)
    while len(instances) < EM_INSTANCES:
        size = int(gen.integers(2, 11))
        n_prime = int(gen.choice([5, 10, 20]))
        mistakes = gen.integers(0, n_prime + 1, size=size)
        instances.append(
            {
                "errors": (mistakes / n_prime).tolist(),
                "n_prime": n_prime,
                "eps": float(gen.choice([0.5, 1.0, 2.0])),
            }
        )
    return instances


def _pooled_cells(observed: np.ndarray, expected: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge cells with expected count below 5 into one."""
    small = expected < 5.0
    if not small.any():
        return observed, expected
    obs = np.append(observed[~small], observed[small].sum())
    exp = np.append(expected[~small], expected[small].sum())
    return obs, exp


def check_exponential_mechanism(seed: int, mutations: Set[str]) -> CheckResult:
    """Gumbel-max frequencies against the exact distribution."""
    family = HypothesisFamily.thresholds()
    rng = RandomSource(seed).fork("verify-em")
    failures: List[Dict[str, Any]] = []
    reference: Optional[List[float]] = None
    for i, inst in enumerate(_em_instances()):
        candidates = [family.threshold(j / len(inst["errors"])) for j in range(len(inst["errors"]))]
        honest = ScoredCandidateSet.from_errors(candidates, inst["errors"], inst["n_prime"], inst["eps"])
        sampled = honest
        if EM_SENSITIVITY_HALVED in mutations:
            sampled = ScoredCandidateSet(candidates, honest.scores, honest.sensitivity / 2.0, honest.em_epsilon)
        probs = exact_em_distribution(honest)
        if i == 0:
            reference = probs.tolist()
        draws = sample_indices(sampled, rng.child(i, "instance"), EM_DRAWS)
        observed = np.bincount(draws, minlength=len(probs)).astype(np.float64)
        obs, exp = _pooled_cells(observed, probs * EM_DRAWS)
        if len(obs) < 2:
            continue
        p_value = float(stats.chisquare(obs, exp).pvalue)
        if not p_value > EM_P_VALUE:
            failures.append({"instance": i, **inst, "p_value": p_value})

    assert reference is not None
    close = all(abs(a - b) <= EM_REFERENCE_TOLERANCE for a, b in zip(reference, EM_REFERENCE))
    if not close:
        failures.append({"instance": 0, "exact": reference, "expected": list(EM_REFERENCE)})
    return CheckResult("exponential_mechanism", not failures, {"instances": EM_INSTANCES, "failures": failures})


# Uniform convergence of disagreement rates


def check_disagreement_convergence(seed: int) -> CheckResult:
    """Sup over a threshold-pair grid of |expected - empirical| disagreement stays within alpha."""
    family = HypothesisFamily.thresholds()
    marginal = Marginal(kind=MarginalKind.UNIFORM, low=family.low, high=family.high)
    D = SyntheticDistribution(marginal=marginal, truth=family.threshold(0.5), noise_rate=0.0)
    n_o = uniform_convergence_size(family.vc_dimension, CONVERGENCE_ALPHA, CONVERGENCE_BETA)

    root = RandomSource(seed)
    grid = np.sort(np.asarray(root.fork("verify-grid").uniform(2 * CONVERGENCE_PAIRS)).reshape(-1, 2), axis=1)
    pairs = [(family.threshold(a), family.threshold(b)) for a, b in grid.tolist()]
    expected = np.array([expected_disagreement(h1, h2, D) for h1, h2 in pairs])

    deviations: List[float] = []
    for trial in range(CONVERGENCE_TRIALS):
        S_u = UnlabeledDataset(draw_points(marginal, n_o, root.child(trial, "verify-convergence")))
        empirical = np.array([empirical_disagreement(h1, h2, S_u) for h1, h2 in pairs])
        deviations.append(float(np.max(np.abs(expected - empirical))))

    within = sum(1 for dev in deviations if dev <= CONVERGENCE_ALPHA)
    required = math.ceil((1.0 - CONVERGENCE_BETA) * CONVERGENCE_TRIALS)
    return CheckResult(
        "disagreement_convergence",
        within >= required,
        {"n_o": n_o, "within": within, "required": required, "max_deviation": max(deviations)},
    )


# Single-record influence


def _blocks(size: int, k: int, overlapping: bool) -> List[np.ndarray]:
    blocks = partition_indices(size, k)
    if not overlapping:
        return blocks
    # Each block also takes the first record of the next one.
    return [np.append(b, b[-1] + 1) if b[-1] + 1 < size else b for b in blocks]


def _votes(
    S_hat: LabeledDataset, family: HypothesisFamily, queries: np.ndarray, overlapping: bool
) -> np.ndarray:
    ensemble = train_on_blocks(S_hat, _blocks(len(S_hat), INFLUENCE_BLOCKS, overlapping), erm_learner(family))
    state = EngineState(ensemble=ensemble, family=family, T=1, w_hat=0.0)
    return np.array([vote_counts(state, x) for x in queries.tolist()], dtype=np.int64)


def check_single_record_influence(seed: int, mutations: Set[str]) -> CheckResult:
    """Neighboring ensembles differ by at most one vote per label on every query."""
    family = HypothesisFamily.thresholds()
    overlapping = OVERLAPPING_BLOCKS in mutations
    size = INFLUENCE_BLOCKS * INFLUENCE_BLOCK_SIZE
    swapped = INFLUENCE_BLOCK_SIZE
    offending: Optional[Dict[str, Any]] = None
    worst = 0
    for s in range(INFLUENCE_SEEDS):
        rng = RandomSource(seed).child(s, "verify-influence")
        x = np.sort(np.asarray(rng.uniform(size)))
        S_hat = LabeledDataset(x, np.zeros(size, dtype=np.int8))
        neighbor_x = x.copy()
        neighbor_y = np.zeros(size, dtype=np.int8)
        neighbor_x[swapped], neighbor_y[swapped] = family.high, 1
        neighbor = LabeledDataset(neighbor_x, neighbor_y)

        queries = np.append(np.asarray(rng.uniform(INFLUENCE_QUERIES)), family.high)
        diff = np.abs(_votes(S_hat, family, queries, overlapping) - _votes(neighbor, family, queries, overlapping))
        l1 = diff.sum(axis=1)
        worst = max(worst, int(l1.max()))
        if offending is None and l1.max() > 2:
            j = int(np.argmax(l1))
            offending = {"seed": s, "query": float(queries[j]), "l1": int(l1[j]), "swapped_index": swapped}
    return CheckResult(
        "single_record_influence",
        offending is None,
        {"seeds": INFLUENCE_SEEDS, "max_l1": worst, "offending": offending},
    )


# Dichotomy counts


def _brute_force_patterns(family: HypothesisFamily, pts: np.ndarray) -> Set[tuple[int, ...]]:
    u = len(pts)
    if family.kind is FamilyKind.THRESHOLD:
        return {tuple([0] * i + [1] * (u - i)) for i in range(u + 1)}
    if family.kind is FamilyKind.INTERVAL:
        patterns = {tuple([0] * u)}
        for i in range(u):
            for j in range(i, u):
                patterns.add(tuple([0] * i + [1] * (j - i + 1) + [0] * (u - j - 1)))
        return patterns
    positions = [family.tokens.index(int(p)) for p in pts.tolist()]
    return {tuple(table[p] for p in positions) for table in family.tables}


def _all_tables_family(tokens: int) -> HypothesisFamily:
    members = [
        {tok: (mask >> tok) & 1 for tok in range(tokens)} for mask in range(2**tokens)
    ]
    return HypothesisFamily.finite(members, vc_dimension=tokens)


def check_dichotomy_counts(seed: int) -> CheckResult:
    """Covers match brute-force realizable patterns and respect Sauer's bound."""
    families = [HypothesisFamily.thresholds(), HypothesisFamily.intervals(), _all_tables_family(4)]
    root = RandomSource(seed)
    for family in families:
        for n in range(1, SAUER_MAX_N + 1):
            rng = root.child(n, f"verify-sauer-{family.kind.value}")
            if family.kind is FamilyKind.FINITE:
                sample = rng.integers(0, len(family.tokens), size=n)
            else:
                sample = np.asarray(rng.uniform(n))
            S_u = UnlabeledDataset(sample)
            instance = {"family": family.kind.value, "points": S_u.points.tolist()}
            try:
                cover = enumerate_dichotomies(family, S_u)
            except VerificationError as exc:
                return CheckResult("dichotomy_counts", False, {**instance, **exc.details})
            pts = cover.support.points
            realized = {tuple(predict(h, pts).tolist()) for h in cover.representatives}
            if len(realized) != len(cover) or realized != _brute_force_patterns(family, pts):
                return CheckResult(
                    "dichotomy_counts",
                    False,
                    {**instance, "cover_size": len(cover), "distinct_patterns": len(realized)},
                )
    return CheckResult("dichotomy_counts", True, {"max_n": SAUER_MAX_N, "families": len(families)})


# Relabel realizability


def check_relabel_realizability(seed: int) -> CheckResult:
    """A relabeled sample is always fit exactly by the selected hypothesis."""
    thresholds = HypothesisFamily.thresholds()
    intervals = HypothesisFamily.intervals()
    marginal = Marginal(kind=MarginalKind.UNIFORM, low=0.0, high=1.0)
    root = RandomSource(seed)
    for i in range(RELABEL_INPUTS):
        rng = root.child(i, "verify-relabel")
        gamma = RELABEL_NOISE_RATES[i % len(RELABEL_NOISE_RATES)]
        family = thresholds if i % 2 == 0 else intervals
        truth: Hypothesis = thresholds.threshold(0.5) if i % 2 == 0 else intervals.interval(0.3, 0.7)
        D = SyntheticDistribution(marginal=marginal, truth=truth, noise_rate=gamma)
        n_prime = int(rng.integers(5, 61))
        S_prime = gen_synthetic(D, n_prime, rng.fork("data"))
        result = relabel(S_prime, family, rng.fork("relabel"))
        if empirical_error(result.chosen, result.relabeled) != 0.0:
            return CheckResult(
                "relabel_realizability",
                False,
                {"input": i, "gamma": gamma, "chosen": result.chosen.describe(), "x": S_prime.x.tolist()},
            )
    return CheckResult("relabel_realizability", True, {"inputs": RELABEL_INPUTS})


CHECKS: Dict[str, Callable[[int, Set[str]], CheckResult]] = {
    "exponential_mechanism": check_exponential_mechanism,
    "disagreement_convergence": lambda seed, _: check_disagreement_convergence(seed),
    "single_record_influence": check_single_record_influence,
    "dichotomy_counts": lambda seed, _: check_dichotomy_counts(seed),
    "relabel_realizability": lambda seed, _: check_relabel_realizability(seed),
}


def verify_suite(
    seed: int = 0,
    mutations: Iterable[str] = (),
    only: Optional[Iterable[str]] = None,
    raise_on_failure: bool = False,
) -> VerificationReport:
    """Run the sub-checks and collect a pass/fail report."""
    active = set(mutations)
    unknown = active - MUTATIONS
    if unknown:
        raise InvalidArgumentError(
            f"unknown mutation(s): {sorted(unknown)}", argument="mutations", value=sorted(unknown)
        )
    names = list(only) if only is not None else list(CHECKS)
    missing = [n for n in names if n not in CHECKS]
    if missing:
        raise InvalidArgumentError(f"unknown check(s): {missing}", argument="only", value=missing)

    checks: List[CheckResult] = []
    for name in names:
        try:
            result = CHECKS[name](seed, active)
        except PrivQueryException as exc:
            result = CheckResult(name, False, {"error": exc.to_dict()})
        logger.info("Verification check finished", check=name, passed=result.passed, mutations=sorted(active))
        checks.append(result)

    report = VerificationReport(checks)
    if raise_on_failure and not report.passed:
        first = report.failures[0]
        raise VerificationError(f"verification check {first.name} failed", check=first.name, instance=first.detail)
    return report
