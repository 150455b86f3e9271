"""
Experiment models for privquery.

Config files are flat TOML key-value tables validated here. Trial results,
per-config summaries and the run manifest are what the harness persists.
"""

import itertools
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Type, TypeVar, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from privquery.core.config import SUPPORTED_SCHEMA_VERSION, settings
from privquery.models.hypothesis import (
    PARAM_COUNT,
    FamilyKind,
    Hypothesis,
    HypothesisFamily,
    Marginal,
    MarginalKind,
    SyntheticDistribution,
)
from privquery.utils.exceptions import ConfigurationError

ConfigT = TypeVar("ConfigT", bound="ExperimentConfig")


class Mode(str, Enum):
    SUBSAMP = "subsamp"
    AGNOSTIC = "agnostic"
    UNIVERSAL = "universal"
    RELABEL_ONLY = "relabel-only"


class ExperimentConfig(BaseModel):
    """One experiment: a family, a distribution, privacy/accuracy targets and a trial count."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: int = Field(..., description="Config schema version")
    name: str = Field("experiment", min_length=1, description="Label used for output paths")
    mode: Mode = Field(Mode.AGNOSTIC, description="subsamp, agnostic, universal or relabel-only")

    # Hypothesis family
    family: FamilyKind = Field(FamilyKind.THRESHOLD, description="threshold, interval or finite-explicit")
    domain_low: float = Field(0.0, description="Domain minimum for continuous families")
    domain_high: float = Field(1.0, description="Domain maximum for continuous families")
    finite_members: List[List[int]] = Field(
        default_factory=list, description="Label tables over tokens 0..L-1 for finite families"
    )
    finite_vc_dimension: Optional[int] = Field(None, ge=1, description="Declared VC dimension of a finite family")

    # Distribution
    truth: List[float] = Field(..., description="Parameters of h*: [t], [a, b] or [member index]")
    marginal: MarginalKind = Field(MarginalKind.UNIFORM, description="uniform or discrete")
    marginal_points: List[float] = Field(default_factory=list)
    marginal_weights: List[float] = Field(default_factory=list)
    noise_rate: float = Field(0.0, ge=0.0, lt=0.5, description="Label flip probability gamma")

    # Sizes and targets
    n: int = Field(..., ge=1, description="Private sample size")
    m: int = Field(1, ge=1, description="Number of queries")
    epsilon: float = Field(..., gt=0)
    delta: float = Field(..., gt=0, lt=1)
    alpha: float = Field(..., gt=0, lt=1)
    beta: float = Field(..., gt=0, lt=1)
    scale_factor: float = Field(1.0, gt=0, description="Multiplier on lambda, k and w")

    trials: int = Field(1, ge=1)
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0, lt=2**64)

    @field_validator("schema_version")
    @classmethod
    def validate_schema_version(cls, v: int) -> int:
        if v != SUPPORTED_SCHEMA_VERSION:
            raise ValueError(f"schema_version {v} is not supported (expected {SUPPORTED_SCHEMA_VERSION})")
        return v

    @model_validator(mode="after")
    def validate_components(self) -> "ExperimentConfig":
        # Building the family and distribution runs their validation.
        try:
            self.build_distribution()
        except ValueError as exc:
            raise ValueError(f"invalid family or distribution: {exc}") from exc
        return self

    @property
    def canonical(self) -> bool:
        return self.scale_factor == 1.0

    def build_family(self) -> HypothesisFamily:
        if self.family is FamilyKind.THRESHOLD:
            return HypothesisFamily.thresholds(self.domain_low, self.domain_high)
        if self.family is FamilyKind.INTERVAL:
            return HypothesisFamily.intervals(self.domain_low, self.domain_high)
        if not self.finite_members or self.finite_vc_dimension is None:
            raise ValueError("finite families need finite_members and finite_vc_dimension")
        members = [dict(enumerate(table)) for table in self.finite_members]
        return HypothesisFamily.finite(members, self.finite_vc_dimension)

    def build_truth(self, family: Optional[HypothesisFamily] = None) -> Hypothesis:
        family = family or self.build_family()
        if family.kind is FamilyKind.FINITE:
            if len(self.truth) != 1 or not 0 <= int(self.truth[0]) < len(family.tables):
                raise ValueError("finite truth must be a single member index")
            return family.member(int(self.truth[0]))
        if len(self.truth) != PARAM_COUNT[family.kind]:
            raise ValueError(f"{family.kind.value} truth takes {PARAM_COUNT[family.kind]} parameter(s)")
        return family.from_params(self.truth)

    def build_distribution(self) -> SyntheticDistribution:
        family = self.build_family()
        if self.marginal is MarginalKind.UNIFORM:
            marginal = Marginal(kind=MarginalKind.UNIFORM, low=self.domain_low, high=self.domain_high)
        else:
            marginal = Marginal(
                kind=MarginalKind.DISCRETE,
                points=tuple(self.marginal_points),
                weights=tuple(self.marginal_weights),
            )
        return SyntheticDistribution(marginal=marginal, truth=self.build_truth(family), noise_rate=self.noise_rate)

    @classmethod
    def from_mapping(cls: Type[ConfigT], data: Dict[str, Any], source: str = "<mapping>") -> ConfigT:
        if "schema_version" not in data:
            raise ConfigurationError(f"{source}: missing schema_version", config_key="schema_version")
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            first = exc.errors()[0]
            key = ".".join(str(part) for part in first["loc"]) or None
            raise ConfigurationError(
                f"{source}: {first['msg']}",
                config_key=key,
                details={"errors": [
                    {"loc": [str(p) for p in e["loc"]], "msg": e["msg"]} for e in exc.errors()
                ]},
            ) from exc

    @classmethod
    def from_toml(cls: Type[ConfigT], path: Union[str, Path]) -> ConfigT:
        path = Path(path)
        try:
            with path.open("rb") as handle:
                data = tomllib.load(handle)
        except FileNotFoundError as exc:
            raise ConfigurationError(f"config file not found: {path}", config_key=str(path)) from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}", config_key=str(path)) from exc
        return cls.from_mapping(data, source=str(path))


SWEEP_AXES = ("n", "m", "alpha", "noise_rate")


class SweepConfig(ExperimentConfig):
    """A base experiment plus value lists for the swept axes."""

    sweep_n: List[int] = Field(default_factory=list)
    sweep_m: List[int] = Field(default_factory=list)
    sweep_alpha: List[float] = Field(default_factory=list)
    sweep_noise_rate: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_axes(self) -> "SweepConfig":
        # Each swept value must form a valid experiment with the base fields.
        base = self.model_dump(exclude={f"sweep_{axis}" for axis in SWEEP_AXES})
        for axis in SWEEP_AXES:
            for value in getattr(self, f"sweep_{axis}"):
                try:
                    ExperimentConfig.model_validate({**base, axis: value})
                except ValidationError as exc:
                    reason = exc.errors()[0]["msg"]
                    raise ValueError(f"sweep_{axis} value {value!r} is invalid: {reason}") from exc
        return self

    def cells(self) -> List[ExperimentConfig]:
        """Every grid cell as a standalone config, in axis order."""
        base = self.model_dump(exclude={f"sweep_{axis}" for axis in SWEEP_AXES})
        axes = [getattr(self, f"sweep_{axis}") or [getattr(self, axis)] for axis in SWEEP_AXES]
        cells = []
        for values in itertools.product(*axes):
            overrides = dict(zip(SWEEP_AXES, values))
            suffix = "-".join(f"{axis}{value}" for axis, value in overrides.items())
            cells.append(ExperimentConfig.model_validate({**base, **overrides, "name": f"{self.name}-{suffix}"}))
        return cells


class TrialResult(BaseModel):
    """Outcome of one trial; reproducible from (config, trial) alone."""

    model_config = ConfigDict(frozen=True)

    trial: int = Field(..., ge=0)
    seed: int
    mode: Mode
    avg_error: float = Field(..., ge=0.0, le=1.0)
    excess: float
    gamma: float
    unstable_count: int = Field(0, ge=0)
    halted_at: Optional[int] = None
    answered: int = Field(0, ge=0)
    erm_error: Optional[float] = Field(None, description="Expected error of non-private ERM on S")
    hypothesis_error: Optional[float] = Field(None, description="Expected error of the privately selected hypothesis")
    avg_mismatch_vs_relabel: Optional[float] = None
    avg_mismatch_vs_majority: Optional[float] = None
    tail_error: Optional[float] = None
    cover_size: Optional[int] = None
    chosen: Optional[Dict[str, Any]] = None
    params: Dict[str, Any] = Field(default_factory=dict, description="Derived-parameter snapshot")
    elapsed_seconds: float = Field(0.0, ge=0.0)

    def comparable(self) -> Dict[str, Any]:
        """Everything except wall-clock timing."""
        return self.model_dump(exclude={"elapsed_seconds"})


class SummaryStats(BaseModel):
    """Aggregates over the trials of one config."""

    model_config = ConfigDict(frozen=True)

    name: str
    mode: Mode
    n: int
    m: int
    alpha: float
    noise_rate: float
    trials: int
    failed: int = 0
    error: Optional[str] = None
    mean_avg_error: Optional[float] = None
    mean_excess: Optional[float] = None
    median_excess: Optional[float] = None
    excess_q10: Optional[float] = None
    excess_q90: Optional[float] = None
    fraction_within_alpha: Optional[float] = Field(None, ge=0.0, le=1.0)
    fraction_within_alpha_gamma: Optional[float] = Field(None, ge=0.0, le=1.0)
    mean_unstable: Optional[float] = None
    median_unstable: Optional[float] = None
    max_unstable: Optional[int] = None
    halted_trials: Optional[int] = None
    mean_tail_error: Optional[float] = None

    @classmethod
    def from_results(
        cls, config: ExperimentConfig, results: Sequence[TrialResult], failed: int = 0, error: Optional[str] = None
    ) -> "SummaryStats":
        ordered = sorted(results, key=lambda r: r.trial)
        base = {
            "name": config.name,
            "mode": config.mode,
            "n": config.n,
            "m": config.m,
            "alpha": config.alpha,
            "noise_rate": config.noise_rate,
            "trials": len(ordered),
            "failed": failed,
            "error": error,
        }
        if not ordered:
            return cls(**base)
        excess = np.array([r.excess for r in ordered])
        avg = np.array([r.avg_error for r in ordered])
        unstable = np.array([r.unstable_count for r in ordered])
        tails = [r.tail_error for r in ordered if r.tail_error is not None]
        return cls(
            **base,
            mean_avg_error=float(avg.mean()),
            mean_excess=float(excess.mean()),
            median_excess=float(np.median(excess)),
            excess_q10=float(np.quantile(excess, 0.1)),
            excess_q90=float(np.quantile(excess, 0.9)),
            fraction_within_alpha=float(np.mean(excess <= config.alpha)),
            fraction_within_alpha_gamma=float(np.mean(avg <= config.alpha + config.noise_rate)),
            mean_unstable=float(unstable.mean()),
            median_unstable=float(np.median(unstable)),
            max_unstable=int(unstable.max()),
            halted_trials=sum(1 for r in ordered if r.halted_at is not None),
            mean_tail_error=float(np.mean(tails)) if tails else None,
        )


class RunManifest(BaseModel):
    """What a run needs to be reproduced and audited."""

    created_at: str
    app_version: str
    schema_version: int
    seed: int
    command: str
    config: Dict[str, Any]
    canonical_constants: Dict[str, Any] = Field(default_factory=dict)
    scaled_constants: Dict[str, Any] = Field(default_factory=dict)
    scale_factor: float = 1.0
    metrics: Dict[str, Any] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    extra: Dict[str, Any] = Field(default_factory=dict)
