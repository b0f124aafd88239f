"""Core Pydantic models for event_dynamics."""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class BandName(str, Enum):
    """Frequency bands of the toy protocol."""

    LOW = "low"
    MID = "mid"
    HIGH = "high"


class Split(str, Enum):
    """Dataset splits."""

    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class BandSpec(BaseModel):
    """Truncated-normal distribution of latent rates for one band."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: BandName
    mu: float = Field(description="Mean rate (Hz)")
    sigma: float = Field(gt=0, description="Rate standard deviation (Hz)")
    lo: float = Field(gt=0, description="Lower rate bound (Hz)")
    hi: float = Field(description="Upper rate bound (Hz)")

    @model_validator(mode="after")
    def check_order(self) -> BandSpec:
        """Require lo < mu < hi."""
        if not self.lo < self.mu < self.hi:
            raise ValueError(
                f"Band {self.name.value} needs lo < mu < hi, "
                f"got {self.lo}, {self.mu}, {self.hi}"
            )
        return self


class ToyRecord(BaseModel):
    """One synthetic sequence: latent rate, event times and noisy observations."""

    model_config = ConfigDict(extra="forbid")

    record_id: str
    rate: float = Field(gt=0, description="Latent event rate (Hz)")
    event_times: list[float] = Field(min_length=1)
    observations: list[float] = Field(min_length=1)
    band: BandName
    split: Split
    seed: int = Field(ge=0)
    stream: list[int] = Field(default_factory=list)

    @field_validator("event_times")
    @classmethod
    def check_increasing(cls, v: list[float]) -> list[float]:
        """Event times must be positive and strictly increasing."""
        if v[0] <= 0 or any(b <= a for a, b in zip(v, v[1:], strict=False)):
            raise ValueError("event_times must be positive and strictly increasing")
        return v

    @model_validator(mode="after")
    def check_lengths(self) -> ToyRecord:
        """One observation per event."""
        if len(self.event_times) != len(self.observations):
            raise ValueError("event_times and observations must have equal length")
        return self

    @property
    def n_obs(self) -> int:
        return len(self.observations)


class DatasetManifest(BaseModel):
    """Sidecar description of a generated dataset directory."""

    model_config = ConfigDict(extra="forbid")

    bands: list[BandSpec]
    counts: dict[str, int]
    rates_per_split: dict[str, int]
    seqs_per_rate: int
    seed: int
    noise: float
    n_obs: int
    files: dict[str, str] = Field(
        default_factory=dict, description="File name to SHA-256 digest"
    )


class MixtureSpec(BaseModel):
    """Lognormal mixture given by weights, mean intervals and log-scales."""

    model_config = ConfigDict(extra="forbid")

    weights: list[float] = Field(min_length=1)
    mean_intervals: list[float] = Field(min_length=1)
    scales: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def check_components(self) -> MixtureSpec:
        """Component arrays must agree and weights must be a distribution."""
        k = len(self.weights)
        if len(self.mean_intervals) != k or len(self.scales) != k:
            raise ValueError("weights, mean_intervals and scales need equal length")
        if any(w < 0 for w in self.weights) or not math.isclose(
            sum(self.weights), 1.0, abs_tol=1e-9
        ):
            raise ValueError("weights must be nonnegative and sum to 1")
        if any(t <= 0 for t in self.mean_intervals) or any(s <= 0 for s in self.scales):
            raise ValueError("mean_intervals and scales must be positive")
        return self


class DensitySpec(BaseModel):
    """Family and parameters of a variational interval density."""

    model_config = ConfigDict(extra="forbid")

    family: Literal["exponential", "lognormal", "mixture"]
    rate: float | None = Field(default=None, gt=0)
    mu: float | None = None
    s: float | None = Field(default=None, gt=0)
    mixture: MixtureSpec | None = None

    @model_validator(mode="after")
    def check_parameters(self) -> DensitySpec:
        """Each family needs its own parameters."""
        missing = {
            "exponential": self.rate is None,
            "lognormal": self.mu is None or self.s is None,
            "mixture": self.mixture is None,
        }[self.family]
        if missing:
            raise ValueError(f"Missing parameters for family '{self.family}'")
        return self


class RateSpec(BaseModel):
    """Prior hazard, either constant or a piecewise-linear table."""

    model_config = ConfigDict(extra="forbid")

    constant: float | None = Field(default=None, gt=0)
    table: list[tuple[float, float]] | None = None

    @model_validator(mode="after")
    def check_exactly_one(self) -> RateSpec:
        """Exactly one of constant or table."""
        if (self.constant is None) == (self.table is None):
            raise ValueError("Specify exactly one of 'constant' or 'table'")
        if self.table is not None and len(self.table) < 2:
            raise ValueError("A rate table needs at least two (t, r) rows")
        return self


class KlProblemSpec(BaseModel):
    """JSON description of a KL bound problem."""

    model_config = ConfigDict(extra="forbid")

    q: DensitySpec
    r: RateSpec
    horizon: float = Field(gt=0)
    epsilon: float = Field(gt=0, lt=1)

    @model_validator(mode="after")
    def check_epsilon(self) -> KlProblemSpec:
        """Require epsilon below exp(-horizon)."""
        if self.epsilon >= math.exp(-self.horizon):
            raise ValueError("epsilon must be smaller than exp(-horizon)")
        return self


class KlBoundReport(BaseModel):
    """Upper bound, its components and the quadrature oracle."""

    model_config = ConfigDict(extra="forbid")

    u_eps: float
    g_eps: float
    tail: float
    oracle: float | None = None
    gap: float | None = None
    epsilon: float
    horizon: float
    ode_steps: int


class AdjacencyProvenance(BaseModel):
    """How an adjacency matrix was produced."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["event_lag", "trajectory", "pearson"]
    alpha: float | None = None
    grid_points: int | None = None
    mc_samples: int | None = None
    seed: int | None = None
    gamma: float | None = None
    kernel: str | None = None


class AdjacencyRecord(BaseModel):
    """Serializable adjacency with flags and provenance."""

    model_config = ConfigDict(extra="forbid")

    matrix: list[list[float]]
    symmetrized: bool
    diagonal_zeroed: bool
    provenance: AdjacencyProvenance


class EventSamples(BaseModel):
    """Monte-Carlo event realizations, each a list of per-channel event times."""

    model_config = ConfigDict(extra="forbid")

    window: float = Field(gt=0, description="Observation window (s)")
    samples: list[list[list[float]]] = Field(min_length=1)


class GraphSummary(BaseModel):
    """Adjacencies built from one observation matrix and their Fisher-z fit."""

    model_config = ConfigDict(extra="forbid")

    channels: int
    pearson: list[list[float]]
    event_lag: AdjacencyRecord
    trajectory: AdjacencyRecord
    fisher_z: dict[str, float]


class TrialRecord(BaseModel):
    """Deviation between clean and perturbed adjacencies for one trial."""

    model_config = ConfigDict(extra="forbid")

    trial: int
    alpha: float
    noise: Literal["uniform", "gaussian"]
    noise_level: float
    channels: int
    ms: int
    max_deviation: float
    frobenius_deviation: float
    entry_bound: float
    frobenius_bound: float
    averaged_frobenius_bound: float
    entry_violation: bool
    frobenius_violation: bool


class TailRecord(BaseModel):
    """Empirical tail frequency against its concentration bound."""

    model_config = ConfigDict(extra="forbid")

    tau: float
    bound: float
    frequency: float
    standard_error: float
    exceedances: int
    samples: int
    violated: bool


class ExpectationRecord(BaseModel):
    """Empirical mean deviation against its expectation bound."""

    model_config = ConfigDict(extra="forbid")

    quantity: Literal["entry", "frobenius"]
    mean: float
    standard_error: float
    bound: float
    violated: bool


class StabilityReport(BaseModel):
    """Outcome of one stability verification run."""

    model_config = ConfigDict(extra="forbid")

    check: Literal["deterministic", "subgaussian", "gaussian_expectation"]
    parameters: dict[str, Any]
    trials: list[TrialRecord] = Field(default_factory=list)
    tail: list[TailRecord] = Field(default_factory=list)
    expectation: list[ExpectationRecord] = Field(default_factory=list)

    @property
    def violations(self) -> int:
        """Number of violated bounds across all sections."""
        return (
            sum(t.entry_violation or t.frobenius_violation for t in self.trials)
            + sum(t.violated for t in self.tail)
            + sum(e.violated for e in self.expectation)
        )


class EpochRecord(BaseModel):
    """Per-epoch training summary."""

    model_config = ConfigDict(extra="forbid")

    epoch: int
    learning_rate: float
    temperature: float
    components: dict[str, float]
    train_loss: float
    val_loss: float
    val_accuracy: float
    best_val_loss: float
    selected: bool


class TrainingLog(BaseModel):
    """Full training history."""

    model_config = ConfigDict(extra="forbid")

    epochs: list[EpochRecord] = Field(default_factory=list)
    best_epoch: int | None = None


class BandMetrics(BaseModel):
    """Rate-recovery metrics for one band."""

    model_config = ConfigDict(extra="forbid")

    band: BandName
    n_records: int
    median_rate: float
    ci_lo: float
    ci_hi: float
    interval_lo: float
    interval_hi: float
    iou: float = Field(ge=0, le=1)

    @model_validator(mode="after")
    def check_ci(self) -> BandMetrics:
        """The confidence interval must bracket the median."""
        tol = 1e-9 * max(1.0, abs(self.median_rate))
        if not self.ci_lo - tol <= self.median_rate <= self.ci_hi + tol:
            raise ValueError("Confidence interval must contain the median")
        return self


class ScatterPair(BaseModel):
    """Predicted versus true event time matched by order index."""

    model_config = ConfigDict(extra="forbid")

    record_id: str
    band: BandName
    index: int
    predicted: float
    true: float


class EvalReport(BaseModel):
    """Evaluation metrics over a test split."""

    model_config = ConfigDict(extra="forbid")

    cosine_similarity: dict[str, float]
    mean_cosine_similarity: float = Field(ge=-1, le=1)
    inferred_rates: dict[str, float]
    bands: list[BandMetrics]
    scatter: list[ScatterPair]
    accuracy: float | None = None
    macro_f1: float | None = None


class RunManifest(BaseModel):
    """Config echo and artifact digests written by every CLI run."""

    model_config = ConfigDict(extra="forbid")

    command: str
    version: str
    config: dict[str, Any]
    status: Literal["running", "complete"] = "running"
    artifacts: dict[str, str] = Field(default_factory=dict)
