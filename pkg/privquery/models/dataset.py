"""
Dataset models for privquery.

Labeled and unlabeled samples are stored as read-only numpy columns. Order
is stable, so index ``i`` always addresses record ``i``, and duplicates are
allowed since resampling creates them.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Sequence, Tuple, Type, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from privquery.utils.exceptions import InvalidArgumentError

Point = Union[float, int]


class Label(IntEnum):
    """Binary label. Abstention is an engine outcome, never a label."""

    ZERO = 0
    ONE = 1


class DatasetOrigin(str, Enum):
    RAW = "raw"
    SUBSAMPLED = "subsampled"
    RELABELED = "relabeled"
    RESAMPLED = "resampled"


def _freeze(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.setflags(write=False)
    return values


def _as_points(points: Union[Sequence[Point], np.ndarray]) -> np.ndarray:
    arr = np.asarray(points)
    if arr.ndim != 1:
        raise InvalidArgumentError("feature points must form a flat sequence", argument="points", value=arr.shape)
    if arr.size == 0:
        return np.empty(0, dtype=np.float64)
    if np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.int64)
    if np.issubdtype(arr.dtype, np.floating):
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("feature points must be finite", argument="points")
        return arr.astype(np.float64)
    raise InvalidArgumentError(
        "feature points must be reals or integer tokens", argument="points", value=str(arr.dtype)
    )


@dataclass(frozen=True, eq=False)
class UnlabeledDataset:
    """An ordered list of feature points."""

    points: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", _freeze(_as_points(self.points)))

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def distinct(self) -> np.ndarray:
        """Sorted distinct points."""
        return np.unique(self.points)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """An ordered list of (x, y) examples with a provenance tag."""

    x: np.ndarray
    y: np.ndarray
    origin: DatasetOrigin = DatasetOrigin.RAW

    def __post_init__(self) -> None:
        x = _as_points(self.x)
        y = np.asarray(self.y)
        if y.size == 0:
            y = np.empty(0, dtype=np.int8)
        if y.ndim != 1 or y.shape != x.shape:
            raise InvalidArgumentError(
                "labels must be parallel to feature points",
                argument="y",
                details={"x_shape": list(x.shape), "y_shape": list(y.shape)},
            )
        if not np.all((y == 0) | (y == 1)):
            raise InvalidArgumentError("labels must be 0 or 1", argument="y")
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y.astype(np.int8)))
        object.__setattr__(self, "origin", DatasetOrigin(self.origin))

    @classmethod
    def from_examples(
        cls, examples: Sequence[Tuple[Point, int]], origin: DatasetOrigin = DatasetOrigin.RAW
    ) -> "LabeledDataset":
        if not examples:
            return cls(np.empty(0), np.empty(0, dtype=np.int8), origin)
        xs, ys = zip(*examples)
        return cls(np.asarray(xs), np.asarray(ys), origin)

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def unlabeled(self) -> UnlabeledDataset:
        return UnlabeledDataset(self.x)

    def take(self, indices: np.ndarray, origin: DatasetOrigin) -> "LabeledDataset":
        """Records at ``indices`` in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.x[idx], self.y[idx], origin)

    def with_labels(self, labels: np.ndarray, origin: DatasetOrigin) -> "LabeledDataset":
        return LabeledDataset(self.x, labels, origin)

    def equals(self, other: "LabeledDataset") -> bool:
        """Record-for-record equality, ignoring provenance."""
        return (
            self.x.dtype == other.x.dtype
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.x, "y": self.y.astype(np.int64)})

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write with header ``x,y`` and round-trip float formatting."""
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path: Union[str, Path], origin: DatasetOrigin = DatasetOrigin.RAW) -> "LabeledDataset":
        frame = pd.read_csv(path, float_precision="round_trip")
        if list(frame.columns) != ["x", "y"]:
            raise InvalidArgumentError(
                "dataset CSV must have header x,y", argument="path", value=str(path)
            )
        return cls(frame["x"].to_numpy(), frame["y"].to_numpy(), origin)


TargetT = TypeVar("TargetT", bound="_CheckedTarget")


class _CheckedTarget(BaseModel):
    model_config = ConfigDict(frozen=True)

    @classmethod
    def checked(cls: Type[TargetT], **values: Any) -> TargetT:
        """Build from keyword values; a bad value raises ``InvalidArgumentError``."""
        try:
            return cls(**values)
        except ValidationError as exc:
            first = exc.errors()[0]
            argument = str(first["loc"][0]) if first["loc"] else None
            raise InvalidArgumentError(
                f"{argument}: {first['msg']}", argument=argument, value=values.get(argument or "")
            ) from exc


class PrivacyBudget(_CheckedTarget):
    """An (epsilon, delta) privacy budget."""

    epsilon: float = Field(..., gt=0, description="Privacy loss parameter")
    delta: float = Field(..., gt=0, lt=1, description="Failure probability of pure privacy")

    @field_validator("epsilon")
    @classmethod
    def validate_epsilon(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("epsilon must be finite")
        return v


class AccuracyTarget(_CheckedTarget):
    """An (alpha, beta) accuracy target."""

    alpha: float = Field(..., gt=0, lt=1, description="Excess error allowance")
    beta: float = Field(..., gt=0, lt=1, description="Failure probability")


@dataclass(frozen=True, eq=False)
class QueryStream:
    """Queries handed to an engine, paired with labels only the scorer sees."""

    points: UnlabeledDataset
    hidden_labels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        labels = np.asarray(self.hidden_labels).astype(np.int8)
        if labels.shape != self.points.points.shape:
            raise InvalidArgumentError("hidden labels must be parallel to queries", argument="hidden_labels")
        object.__setattr__(self, "hidden_labels", _freeze(labels))

    def __len__(self) -> int:
        return len(self.points)
