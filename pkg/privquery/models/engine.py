"""
Engine models for privquery.

Parameter bundles derived for the agnostic pipeline and the sub-sample
engine, mechanism inputs, the mutable engine state and the per-query answer
records it emits.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from privquery.models.dataset import LabeledDataset, Label, UnlabeledDataset
from privquery.models.hypothesis import DichotomyCover, Hypothesis, HypothesisFamily
from privquery.utils.exceptions import InvalidArgumentError


class AgnosticParams(BaseModel):
    """Constants derived at the top of the agnostic pipeline."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Private sample size")
    n_prime: int = Field(..., ge=1, description="Subsample size, floor(eps * n / 56)")
    T: int = Field(..., ge=1, description="Unstable-query cutoff")
    eps_prime: float = Field(..., gt=0)
    eps_hat: float = Field(..., gt=0, description="Privacy parameter handed to the engine")
    delta_hat: float = Field(..., gt=0, description="Failure parameter handed to the engine")

    @model_validator(mode="after")
    def validate_delta_hat(self) -> "AgnosticParams":
        if not self.delta_hat < 1:
            raise ValueError("delta_hat must be below 1")
        return self


class SubSampParams(BaseModel):
    """Constants of the sub-sample engine.

    ``lam``, ``k`` and ``w`` are the values the engine uses. The ``*_canonical``
    fields always hold the unscaled formula values.
    """

    model_config = ConfigDict(frozen=True)

    T: int = Field(..., ge=1)
    lam: float = Field(..., gt=0)
    k: int = Field(..., ge=1)
    w: float = Field(..., gt=0)
    scale_factor: float = Field(1.0, gt=0)
    lam_canonical: float = Field(..., gt=0)
    k_canonical: int = Field(..., ge=1)
    w_canonical: float = Field(..., gt=0)

    @property
    def canonical(self) -> bool:
        return self.scale_factor == 1.0

    @property
    def eps_stab(self) -> float:
        return 1.0 / (2.0 * self.lam)

    def snapshot(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            "lambda": self.lam,
            "k": self.k,
            "w": self.w,
            "scale_factor": self.scale_factor,
            "canonical": self.canonical,
            "lambda_canonical": self.lam_canonical,
            "k_canonical": self.k_canonical,
            "w_canonical": self.w_canonical,
        }


class LaplaceNoise(BaseModel):
    model_config = ConfigDict(frozen=True)

    scale: float = Field(..., gt=0, description="Laplace scale b")


@dataclass(frozen=True, eq=False)
class ScoredCandidateSet:
    """Candidates with parallel scores for the exponential mechanism."""

    candidates: Union[Sequence[Hypothesis], DichotomyCover]
    scores: np.ndarray
    sensitivity: float
    em_epsilon: float

    def __post_init__(self) -> None:
        scores = np.array(self.scores, dtype=np.float64, copy=True).reshape(-1)
        if scores.size == 0 or scores.size != len(self.candidates):
            raise InvalidArgumentError(
                "candidates and scores must be parallel and nonempty",
                argument="scores",
                details={"candidates": len(self.candidates), "scores": int(scores.size)},
            )
        if not np.all(np.isfinite(scores)):
            raise InvalidArgumentError("scores must be finite", argument="scores")
        if not self.sensitivity > 0:
            raise InvalidArgumentError("sensitivity must be positive", argument="sensitivity", value=self.sensitivity)
        if not self.em_epsilon > 0:
            raise InvalidArgumentError("em_epsilon must be positive", argument="em_epsilon", value=self.em_epsilon)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @classmethod
    def from_errors(
        cls,
        candidates: Union[Sequence[Hypothesis], DichotomyCover],
        errors: Union[Sequence[float], np.ndarray],
        sample_size: int,
        em_epsilon: float,
    ) -> "ScoredCandidateSet":
        """Error score ``-err(h; S)`` with sensitivity ``1/|S|``."""
        if sample_size < 1:
            raise InvalidArgumentError("sample size must be positive", argument="sample_size", value=sample_size)
        return cls(candidates, -np.asarray(errors, dtype=np.float64), 1.0 / sample_size, em_epsilon)

    @property
    def logits(self) -> np.ndarray:
        """Exponent ``eps * q / (2 * sensitivity)`` per candidate."""
        return self.em_epsilon * self.scores / (2.0 * self.sensitivity)

    def __len__(self) -> int:
        return int(self.scores.shape[0])


class StabilityQuery(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: int
    dist: float = Field(..., ge=0)
    threshold: float
    eps_stab: float = Field(..., gt=0)


class StabilityOutcome(BaseModel):
    """Stable(value) or Unstable."""

    model_config = ConfigDict(frozen=True)

    stable: bool
    value: Optional[int] = None
    noisy_dist: float


class AnswerRecord(BaseModel):
    """One released answer."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=1, description="1-based query position")
    query: Union[int, float]
    label: Label
    stable: bool
    post_halt: bool = False
    c: int = Field(0, ge=0, description="Unstable counter after this answer")
    dist: Optional[float] = None

    @model_validator(mode="after")
    def validate_flags(self) -> "AnswerRecord":
        if self.post_halt and self.stable:
            raise ValueError("post-halt answers are uniform draws, never stable")
        return self


@dataclass
class EngineState:
    """Mutable state of one sub-sample engine over its query stream."""

    ensemble: List[Hypothesis]
    family: HypothesisFamily
    T: int
    w_hat: float
    c: int = 0
    halted: bool = False
    answered: int = 0
    halted_at: Optional[int] = None
    ensemble_params: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.ensemble:
            raise InvalidArgumentError("engine needs a nonempty ensemble", argument="ensemble", value=0)
        params = np.asarray([h.params for h in self.ensemble], dtype=np.float64)
        params.setflags(write=False)
        self.ensemble_params = params

    @property
    def k(self) -> int:
        return len(self.ensemble)

    @property
    def unstable_count(self) -> int:
        return self.c


@dataclass(frozen=True, eq=False)
class RelabelResult:
    relabeled: LabeledDataset
    chosen: Hypothesis
    cover_size: int
    error_before: float
    erm_error: float

    def summary(self) -> Dict[str, Any]:
        return {
            "cover_size": self.cover_size,
            "chosen": self.chosen.describe(),
            "error_before": self.error_before,
            "erm_error": self.erm_error,
        }


class PublicSource(str, Enum):
    ANSWERED_QUERY_PREFIX = "answered-query-prefix"


@dataclass(frozen=True, eq=False)
class PublicUnlabeledSet:
    """Non-private unlabeled points used to build a cover."""

    points: UnlabeledDataset
    source: PublicSource = PublicSource.ANSWERED_QUERY_PREFIX

    def __len__(self) -> int:
        return len(self.points)


class CoverLearnerResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    h_priv: Hypothesis
    cover_size: int = Field(..., ge=1)
    cover_index: int = Field(..., ge=0)
