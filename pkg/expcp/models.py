"""
Pydantic models for samples, statistic specifications, tables and reports.
"""

import math
from enum import Enum
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import DEFAULT_EPSILON, DEFAULT_REPLICATIONS, DEFAULT_SEED

MAX_SEED = 2**64 - 1


class StatisticKind(str, Enum):
    """Which scan statistic to compute."""

    PHI_FAMILY = "t-phi"
    LRT = "lrt"
    LRT_NORMALIZED = "lrt-norm"
    S = "s"


class AccuracyFlag(str, Enum):
    """Outcome of the exact binomial test of an empirical size."""

    ACCURATE = "accurate"
    LIBERAL = "liberal"
    CONSERVATIVE = "conservative"


class LookupPolicy(str, Enum):
    """How a critical-value lookup treats sample sizes missing from a table."""

    EXACT = "exact"
    NEAREST_K_WARN = "nearest-k-warn"


class Sample(BaseModel):
    """One ordered sequence of positive observations."""

    values: list[float] = Field(..., min_length=2, description="Observations X_1..X_K")

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: list[float]) -> list[float]:
        for position, value in enumerate(v, start=1):
            if not math.isfinite(value) or value <= 0:
                raise ValueError(
                    f"Observation {position} must be positive and finite, got {value!r}"
                )
        return v

    @property
    def K(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def reversed(self) -> "Sample":
        return Sample(values=self.values[::-1])

    def scaled(self, factor: float) -> "Sample":
        return Sample(values=[factor * x for x in self.values])


class PrefixMeans(BaseModel):
    """Head, tail and grand means for every split of a sample.

    ``head_means[k-1]`` is the mean of X_1..X_k (k = 1..K) and
    ``tail_means[k-1]`` the mean of X_{k+1}..X_K (k = 1..K-1).
    """

    head_means: list[float]
    tail_means: list[float]
    grand_mean: float

    @model_validator(mode="after")
    def check_lengths(self) -> "PrefixMeans":
        if len(self.tail_means) != len(self.head_means) - 1:
            raise ValueError("tail_means must have exactly one entry fewer than head_means")
        return self

    @property
    def K(self) -> int:
        return len(self.head_means)

    def head(self, k: int) -> float:
        return self.head_means[k - 1]

    def tail(self, k: int) -> float:
        return self.tail_means[k - 1]


class StatisticSpec(BaseModel):
    """Identity of one scan statistic: kind plus (lambda, epsilon) for the phi family."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    kind: StatisticKind = Field(description="Statistic kind")
    lambda_: Optional[float] = Field(
        None, alias="lambda", description="Power-divergence parameter in [-1, 0]"
    )
    epsilon: Optional[float] = Field(None, description="Trimming fraction in (0, 0.5)")

    @field_validator("lambda_", "epsilon")
    @classmethod
    def normalize_zero(cls, v: Optional[float]) -> Optional[float]:
        # -0.0 and 0.0 must serialize identically
        return None if v is None else float(v) + 0.0

    @model_validator(mode="after")
    def check_parameters(self) -> "StatisticSpec":
        if self.kind is StatisticKind.PHI_FAMILY:
            if self.lambda_ is None or self.epsilon is None:
                raise ValueError("t-phi statistics need both lambda and epsilon")
            if not -1.0 <= self.lambda_ <= 0.0:
                raise ValueError(f"lambda must lie in [-1, 0], got {self.lambda_}")
            if not 0.0 < self.epsilon < 0.5:
                raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        elif self.lambda_ is not None or self.epsilon is not None:
            raise ValueError(f"lambda and epsilon apply only to t-phi, not {self.kind.value}")
        return self

    @classmethod
    def phi(cls, lam: float, epsilon: float = DEFAULT_EPSILON) -> "StatisticSpec":
        return cls(kind=StatisticKind.PHI_FAMILY, lambda_=lam, epsilon=epsilon)

    @classmethod
    def lrt(cls) -> "StatisticSpec":
        return cls(kind=StatisticKind.LRT)

    @classmethod
    def lrt_normalized(cls) -> "StatisticSpec":
        return cls(kind=StatisticKind.LRT_NORMALIZED)

    @classmethod
    def s(cls) -> "StatisticSpec":
        return cls(kind=StatisticKind.S)

    @property
    def label(self) -> str:
        if self.kind is StatisticKind.PHI_FAMILY:
            return f"T(lambda={self.lambda_:g}, eps={self.epsilon:g})"
        return {
            StatisticKind.LRT: "LRT",
            StatisticKind.LRT_NORMALIZED: "~LRT",
            StatisticKind.S: "S",
        }[self.kind]

    @property
    def column(self) -> str:
        """Short column heading used by the table-shaped reports."""
        if self.kind is StatisticKind.PHI_FAMILY:
            return f"{self.lambda_:g}"
        return self.label


class ScanResult(BaseModel):
    """Per-split statistic values for one sample and their maximum."""

    spec: StatisticSpec
    K: int = Field(description="Sample length")
    per_k: list[tuple[int, float]] = Field(description="(k, statistic value) pairs")
    k_hat: int = Field(description="Smallest maximizing split")
    max_value: float = Field(description="Statistic value (after normalization)")


class AsymptoticCriticalSet(BaseModel):
    """Asymptotic (K -> infinity) critical values at one level."""

    alpha: float = Field(gt=0, lt=1)
    t_phi: Optional[float] = Field(None, description="Lambda-independent; tabulated levels only")
    lrt_normalized: float
    s: float


class SimulationPlan(BaseModel):
    """Grid of statistics, sample sizes and levels for a Monte Carlo study."""

    specs: list[StatisticSpec] = Field(..., min_length=1)
    K_grid: list[int] = Field(..., min_length=1)
    alphas: list[float] = Field(..., min_length=1)
    B: int = Field(default=DEFAULT_REPLICATIONS, ge=100, description="Replications")
    master_seed: int = Field(default=DEFAULT_SEED, ge=0, le=MAX_SEED)

    @field_validator("alphas")
    @classmethod
    def validate_alphas(cls, v: list[float]) -> list[float]:
        for alpha in v:
            if not 0.0 < alpha < 1.0:
                raise ValueError(f"Significance levels must lie in (0, 1), got {alpha}")
        return v

    @model_validator(mode="after")
    def check_sizes(self) -> "SimulationPlan":
        from .statistics import scan_range

        normalized = any(s.kind is StatisticKind.LRT_NORMALIZED for s in self.specs)
        for K in self.K_grid:
            if K < 2:
                raise ValueError(f"Sample sizes must be at least 2, got {K}")
            if normalized and K < 16:
                raise ValueError(f"The normalized LRT needs K >= 16, got {K}")
            for spec in self.specs:
                if spec.kind is StatisticKind.PHI_FAMILY:
                    scan_range(K, spec.epsilon)
        return self


class CriticalValueEntry(BaseModel):
    """One simulated critical value and the run that produced it."""

    model_config = ConfigDict(frozen=True)

    spec: StatisticSpec
    K: int = Field(ge=2)
    alpha: float = Field(gt=0, lt=1)
    critical_value: float
    B: int = Field(ge=1)
    seed: int = Field(ge=0, le=MAX_SEED)

    @field_validator("critical_value")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("Critical values must be finite")
        return v

    @property
    def key(self) -> tuple[StatisticSpec, int, float]:
        return (self.spec, self.K, self.alpha)


class CriticalValueTable(BaseModel):
    """Collection of simulated critical values keyed by (spec, K, alpha)."""

    model_config = ConfigDict(frozen=True)

    entries: list[CriticalValueEntry] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)
    metadata: dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_unique(self) -> "CriticalValueTable":
        seen: set = set()
        for entry in self.entries:
            if entry.key in seen:
                raise ValueError(
                    f"Duplicate entry for {entry.spec.label}, K={entry.K}, alpha={entry.alpha}"
                )
            seen.add(entry.key)
        return self

    def get(self, spec: StatisticSpec, K: int, alpha: float) -> Optional[CriticalValueEntry]:
        for entry in self.entries:
            if entry.key == (spec, K, alpha):
                return entry
        return None

    def with_entries(
        self, entries: list[CriticalValueEntry], warnings: Optional[list[str]] = None
    ) -> "CriticalValueTable":
        """Return a copy extended with new entries (existing keys are kept)."""
        known = {entry.key for entry in self.entries}
        added = [entry for entry in entries if entry.key not in known]
        return CriticalValueTable(
            entries=[*self.entries, *added],
            warnings=[*self.warnings, *(warnings or [])],
            metadata=dict(self.metadata),
        )


class Provenance(BaseModel):
    """Where a critical value came from."""

    source: Literal["table", "simulated"] = "table"
    K_used: int
    B: int
    seed: int
    warning: Optional[str] = None


class PowerScenario(BaseModel):
    """One alternative: rate theta0 up to split k, theta1 afterwards."""

    model_config = ConfigDict(frozen=True)

    K: int = Field(ge=2)
    tau: float = Field(gt=0, lt=1, description="Relative change location")
    theta0: float = Field(default=1.0, gt=0)
    theta1: float = Field(gt=0, description="Post-change rate")

    @model_validator(mode="after")
    def check_scenario(self) -> "PowerScenario":
        if not math.isfinite(self.theta1):
            raise ValueError("theta1 must be finite")
        if self.theta1 == self.theta0:
            raise ValueError("theta1 must differ from theta0")
        if not 1 <= self.k <= self.K - 1:
            raise ValueError(
                f"Invalid scenario: change point k=[{self.tau}*{self.K}]={self.k} "
                f"is outside 1..{self.K - 1}"
            )
        return self

    @property
    def k(self) -> int:
        return math.floor(self.tau * self.K + 1e-9)

    @property
    def rho(self) -> float:
        return self.theta1 / self.theta0


class StudyCell(BaseModel):
    """Rejection proportion for one (K, scenario, statistic, alpha) cell."""

    K: int
    tau: Optional[float] = None
    theta1: Optional[float] = None
    spec: StatisticSpec
    alpha: float
    critical_value: float
    rejections: int = Field(ge=0)
    B: int = Field(ge=1)
    flag: Optional[AccuracyFlag] = None

    @property
    def proportion(self) -> float:
        return self.rejections / self.B


class StudyReport(BaseModel):
    """Empirical sizes or powers over a grid, with replication metadata."""

    kind: Literal["size", "power"]
    cells: list[StudyCell] = Field(default_factory=list)
    metadata: dict[str, Any] = Field(default_factory=dict)


class SegmentationConfig(BaseModel):
    """Settings of one binary segmentation run."""

    spec: StatisticSpec
    alpha: float = Field(default=0.05, gt=0, lt=1)
    min_segment: int = Field(default=20, ge=4, description="Shortest segment that is tested")
    max_depth: int = Field(default=10, ge=1, description="Recursion cap")
    simulate_on_demand: bool = Field(
        default=True, description="Simulate missing critical values instead of failing"
    )
    B: int = Field(default=DEFAULT_REPLICATIONS, ge=100)
    seed: int = Field(default=DEFAULT_SEED, ge=0, le=MAX_SEED)
    lookup_policy: LookupPolicy = LookupPolicy.EXACT

    @model_validator(mode="after")
    def check_min_segment(self) -> "SegmentationConfig":
        from .statistics import minimum_scan_length

        if self.spec.kind is StatisticKind.LRT_NORMALIZED and self.min_segment < 16:
            raise ValueError("The normalized LRT needs min_segment >= 16")
        if self.spec.kind is StatisticKind.PHI_FAMILY:
            needed = minimum_scan_length(self.spec.epsilon)
            if self.min_segment < needed:
                raise ValueError(
                    f"min_segment={self.min_segment} is too short for epsilon="
                    f"{self.spec.epsilon}; use at least {needed}"
                )
        return self


class ChangeRecord(BaseModel):
    """Audit record of one accepted split."""

    location: int = Field(description="Global index: observations before the change")
    segment_start: int
    segment_end: int
    depth: int
    k_hat: int = Field(description="Split within the segment")
    statistic_value: float
    critical_value: float
    provenance: Provenance


class ChangePointSet(BaseModel):
    """Change points found by binary segmentation."""

    K: int
    locations: list[int] = Field(default_factory=list)
    records: list[ChangeRecord] = Field(default_factory=list)
    config: SegmentationConfig

    @model_validator(mode="after")
    def check_locations(self) -> "ChangePointSet":
        if any(b <= a for a, b in zip(self.locations, self.locations[1:])):
            raise ValueError("Change locations must be strictly increasing")
        return self


class DetectionReport(BaseModel):
    """Single change-point test on one sample."""

    tool_version: str
    config: dict[str, Any]
    statistic: StatisticSpec
    label: str
    K: int
    max_value: float
    k_hat: int
    critical_value: float
    provenance: Provenance
    asymptotic_critical_value: Optional[float] = None
    reject: bool
    theta_hat_before: float = Field(description="1 / mean of X_1..X_k_hat")
    theta_hat_after: float = Field(description="1 / mean of X_k_hat+1..X_K")
    profile: Optional[list[tuple[int, float]]] = None


class SegmentationReport(BaseModel):
    """Binary segmentation result with the configuration that produced it."""

    tool_version: str
    config: dict[str, Any]
    change_points: ChangePointSet


class RunConfig(BaseModel):
    """Fully resolved command-line configuration, echoed into every artifact."""

    command: str
    stats: Optional[list[str]] = None
    lambdas: Optional[list[float]] = None
    epsilon: float = DEFAULT_EPSILON
    K: Optional[list[int]] = None
    alpha: Optional[list[float]] = None
    B: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    fresh_seed: Optional[int] = None
    tau: Optional[list[float]] = None
    theta1: Optional[list[float]] = None
    tables: Optional[str] = None
    input: Optional[str] = None
    out: Optional[str] = None
    shared_samples: bool = False
    simulate_tables: bool = False
    nearest_k: bool = False
    markdown: bool = False
    compare: bool = False
    profile: bool = False
    min_segment: Optional[int] = None
    max_depth: Optional[int] = None
    threads: int = 1

    def echo(self) -> dict[str, Any]:
        """Configuration as embedded in artifacts (fields that never change output are left out)."""
        return self.model_dump(exclude={"threads", "out"})
