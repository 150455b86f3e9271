"""
Hypothesis models for privquery.

Defines the built-in hypothesis families (thresholds, intervals and
explicitly tabulated finite families), individual hypotheses, dichotomy
covers, and the synthetic distributions used to score them exactly.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union, overload

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from privquery.models.dataset import UnlabeledDataset


class FamilyKind(str, Enum):
    THRESHOLD = "threshold"
    INTERVAL = "interval"
    FINITE = "finite-explicit"


CONTINUOUS_KINDS = (FamilyKind.THRESHOLD, FamilyKind.INTERVAL)
PARAM_COUNT = {FamilyKind.THRESHOLD: 1, FamilyKind.INTERVAL: 2, FamilyKind.FINITE: 1}


class Hypothesis(BaseModel):
    """A binary predictor.

    Thresholds predict 1 iff ``x >= t``. Intervals predict 1 iff
    ``a <= x <= b``; ``a > b`` is the empty interval. Finite members carry
    their label table over the family's token domain.
    """

    model_config = ConfigDict(frozen=True)

    family: FamilyKind
    params: Tuple[float, ...]
    low: float = Field(0.0, description="Domain minimum for continuous families")
    high: float = Field(1.0, description="Domain maximum for continuous families")
    tokens: Tuple[int, ...] = Field(default=(), description="Token domain for finite families")
    table: Tuple[int, ...] = Field(default=(), description="Labels parallel to tokens")
    canonical: bool = Field(False, description="Produced as a canonical cover representative")

    @model_validator(mode="after")
    def validate_shape(self) -> "Hypothesis":
        if len(self.params) != PARAM_COUNT[self.family]:
            raise ValueError(f"{self.family.value} takes {PARAM_COUNT[self.family]} parameter(s)")
        if self.family is FamilyKind.FINITE:
            if len(self.tokens) != len(self.table) or not self.tokens:
                raise ValueError("finite hypothesis needs a label for every token")
        elif not self.low < self.high:
            raise ValueError("domain must satisfy low < high")
        return self

    def describe(self) -> Dict[str, Any]:
        """Key-value record used in result logs."""
        if self.family is FamilyKind.THRESHOLD:
            return {"family": self.family.value, "t": self.params[0]}
        if self.family is FamilyKind.INTERVAL:
            return {"family": self.family.value, "a": self.params[0], "b": self.params[1]}
        return {
            "family": self.family.value,
            "index": int(self.params[0]),
            "table": {str(tok): lab for tok, lab in zip(self.tokens, self.table)},
        }


class HypothesisFamily(BaseModel):
    """A hypothesis class with its domain and VC dimension."""

    model_config = ConfigDict(frozen=True)

    kind: FamilyKind
    vc_dimension: int = Field(..., ge=1)
    low: float = 0.0
    high: float = 1.0
    tokens: Tuple[int, ...] = ()
    tables: Tuple[Tuple[int, ...], ...] = ()

    @model_validator(mode="after")
    def validate_family(self) -> "HypothesisFamily":
        if self.kind is FamilyKind.THRESHOLD and self.vc_dimension != 1:
            raise ValueError("thresholds have VC dimension 1")
        if self.kind is FamilyKind.INTERVAL and self.vc_dimension != 2:
            raise ValueError("intervals have VC dimension 2")
        if self.kind in CONTINUOUS_KINDS and not self.low < self.high:
            raise ValueError("domain must satisfy low < high")
        if self.kind is FamilyKind.FINITE:
            if not self.tables:
                raise ValueError("finite family needs at least one member")
            if len(set(self.tokens)) != len(self.tokens) or not self.tokens:
                raise ValueError("finite family tokens must be distinct and nonempty")
            for table in self.tables:
                if len(table) != len(self.tokens) or any(v not in (0, 1) for v in table):
                    raise ValueError("every member must label every token with 0 or 1")
            if self.vc_dimension > math.log2(len(self.tables)):
                raise ValueError(
                    f"declared VC dimension {self.vc_dimension} exceeds log2 of family size {len(self.tables)}"
                )
        return self

    @classmethod
    def thresholds(cls, low: float = 0.0, high: float = 1.0) -> "HypothesisFamily":
        return cls(kind=FamilyKind.THRESHOLD, vc_dimension=1, low=low, high=high)

    @classmethod
    def intervals(cls, low: float = 0.0, high: float = 1.0) -> "HypothesisFamily":
        return cls(kind=FamilyKind.INTERVAL, vc_dimension=2, low=low, high=high)

    @classmethod
    def finite(cls, members: Sequence[Mapping[int, int]], vc_dimension: int) -> "HypothesisFamily":
        """Register a finite family from explicit ``token -> label`` tables."""
        if not members:
            raise ValueError("finite family needs at least one member")
        tokens = tuple(sorted(members[0]))
        tables = []
        for member in members:
            if tuple(sorted(member)) != tokens:
                raise ValueError("every member must cover the same tokens")
            tables.append(tuple(int(member[tok]) for tok in tokens))
        return cls(kind=FamilyKind.FINITE, vc_dimension=vc_dimension, tokens=tokens, tables=tuple(tables))

    @property
    def size(self) -> Optional[int]:
        return len(self.tables) if self.kind is FamilyKind.FINITE else None

    def threshold(self, t: float, canonical: bool = False) -> Hypothesis:
        return Hypothesis(
            family=FamilyKind.THRESHOLD, params=(float(t),), low=self.low, high=self.high, canonical=canonical
        )

    def interval(self, a: float, b: float, canonical: bool = False) -> Hypothesis:
        return Hypothesis(
            family=FamilyKind.INTERVAL,
            params=(float(a), float(b)),
            low=self.low,
            high=self.high,
            canonical=canonical,
        )

    def member(self, index: int, canonical: bool = False) -> Hypothesis:
        return Hypothesis(
            family=FamilyKind.FINITE,
            params=(float(index),),
            tokens=self.tokens,
            table=self.tables[index],
            canonical=canonical,
        )

    def from_params(self, params: Sequence[float], canonical: bool = False) -> Hypothesis:
        if self.kind is FamilyKind.THRESHOLD:
            return self.threshold(params[0], canonical)
        if self.kind is FamilyKind.INTERVAL:
            return self.interval(params[0], params[1], canonical)
        return self.member(int(params[0]), canonical)

    def constant(self, label: int) -> Hypothesis:
        """The member predicting ``label`` everywhere, when the family has one."""
        if self.kind is FamilyKind.THRESHOLD:
            return self.threshold(self.low if label == 1 else np.nextafter(self.high, np.inf))
        if self.kind is FamilyKind.INTERVAL:
            return self.interval(self.low, self.high) if label == 1 else self.interval(self.high, self.low)
        for index, table in enumerate(self.tables):
            if all(v == label for v in table):
                return self.member(index)
        raise ValueError(f"family has no constant-{label} member")

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"family": self.kind.value, "d": self.vc_dimension}
        if self.kind is FamilyKind.FINITE:
            out["size"] = len(self.tables)
        else:
            out["domain"] = [self.low, self.high]
        return out


@dataclass(frozen=True, eq=False)
class DichotomyCover:
    """One canonical representative per dichotomy realizable on ``support``.

    Representatives are stored as a parameter matrix and materialized on
    access; the cover behaves as a sequence of hypotheses.
    """

    family: HypothesisFamily
    support: UnlabeledDataset
    params: np.ndarray
    _cache: Dict[int, Hypothesis] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        params = np.array(self.params, dtype=np.float64, copy=True)
        if params.ndim == 1:
            params = params.reshape(-1, 1)
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    def __len__(self) -> int:
        return int(self.params.shape[0])

    @overload
    def __getitem__(self, index: int) -> Hypothesis: ...

    @overload
    def __getitem__(self, index: slice) -> List[Hypothesis]: ...

    def __getitem__(self, index: Union[int, slice]) -> Union[Hypothesis, List[Hypothesis]]:
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        if index < 0:
            index += len(self)
        if not 0 <= index < len(self):
            raise IndexError(index)
        if index not in self._cache:
            self._cache[index] = self.family.from_params(self.params[index].tolist(), canonical=True)
        return self._cache[index]

    @property
    def representatives(self) -> List[Hypothesis]:
        return self[:]


class MarginalKind(str, Enum):
    UNIFORM = "uniform"
    DISCRETE = "discrete"


class Marginal(BaseModel):
    """Feature distribution: uniform on ``[low, high]`` or explicit weights."""

    model_config = ConfigDict(frozen=True)

    kind: MarginalKind = MarginalKind.UNIFORM
    low: float = 0.0
    high: float = 1.0
    points: Tuple[float, ...] = ()
    weights: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def validate_marginal(self) -> "Marginal":
        if self.kind is MarginalKind.UNIFORM:
            if not self.low < self.high:
                raise ValueError("uniform marginal needs low < high")
        else:
            if not self.points or len(self.points) != len(self.weights):
                raise ValueError("discrete marginal needs parallel points and weights")
            if any(w < 0 for w in self.weights) or not math.isclose(sum(self.weights), 1.0, abs_tol=1e-9):
                raise ValueError("discrete weights must be nonnegative and sum to 1")
        return self


class SyntheticDistribution(BaseModel):
    """D = (marginal, truth h*, noise rate gamma) with gamma < 1/2."""

    model_config = ConfigDict(frozen=True)

    marginal: Marginal
    truth: Hypothesis
    noise_rate: float = Field(0.0, ge=0.0, lt=0.5)

    @model_validator(mode="after")
    def validate_support(self) -> "SyntheticDistribution":
        if self.truth.family is FamilyKind.FINITE:
            if self.marginal.kind is not MarginalKind.DISCRETE:
                raise ValueError("finite families need a discrete marginal over their tokens")
            if not set(int(p) for p in self.marginal.points) <= set(self.truth.tokens):
                raise ValueError("discrete marginal points must be family tokens")
        elif self.marginal.kind is MarginalKind.UNIFORM:
            if self.marginal.low < self.truth.low or self.marginal.high > self.truth.high:
                raise ValueError("marginal support must lie inside the family domain")
        elif any(not self.truth.low <= p <= self.truth.high for p in self.marginal.points):
            raise ValueError("marginal support must lie inside the family domain")
        return self
