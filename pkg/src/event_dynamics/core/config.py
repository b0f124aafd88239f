"""Configuration management for event_dynamics."""

from __future__ import annotations

import copy
import json
import math
import os
from collections.abc import Mapping
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from event_dynamics.core.exceptions import ConfigurationError

LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class NumericsConfig(_Section):
    """Quadrature and ODE defaults."""

    quad_tol: float = Field(default=1e-10, gt=0)
    quad_max_intervals: int = Field(default=2**16, ge=1)
    ode_steps: int = Field(default=1024, ge=1)


class PriorConfig(_Section):
    """Renewal prior bounds and refractory gating."""

    rate_lo: float = Field(default=0.5, gt=0, description="Lower rate bound (Hz)")
    rate_hi: float = Field(default=40.0, gt=0, description="Upper rate bound (Hz)")
    refractory_tau: float = Field(
        default=0.005, gt=0, description="Refractory recovery constant (s)"
    )
    gate_floor: float = Field(default=1e-6, gt=0, lt=1)

    @model_validator(mode="after")
    def check_bounds(self) -> PriorConfig:
        """Ensure the rate interval is ordered."""
        if self.rate_lo > self.rate_hi:
            raise ValueError("rate_lo must not exceed rate_hi")
        return self


class KlConfig(_Section):
    """Settings for the interval KL surrogate."""

    epsilon: float = Field(default=1e-3, gt=0, lt=1)
    horizon: float = Field(
        default=2.0, gt=0, description="Support of the interval density (s)"
    )
    ode_steps: int = Field(default=1024, ge=1)
    train_ode_steps: int = Field(default=256, ge=1)

    @model_validator(mode="after")
    def check_epsilon(self) -> KlConfig:
        """Require epsilon below exp(-horizon)."""
        if self.epsilon >= math.exp(-self.horizon):
            raise ValueError("epsilon must be smaller than exp(-horizon)")
        return self


class MixtureConfig(_Section):
    """Lognormal interval mixture and its prior."""

    n_components: int = Field(default=3, ge=1)
    prior_interval: float = Field(
        default=0.08, gt=0, description="Prior mean interval (s), band midpoint"
    )
    prior_scale: float = Field(default=0.5, gt=0)
    temperature: float = Field(default=0.5, gt=0)
    temperature_decay: float = Field(default=0.95, gt=0, le=1)
    temperature_floor: float = Field(default=0.1, gt=0)
    interval_floor: float = Field(default=1e-4, gt=0)
    scale_floor: float = Field(default=0.01, gt=0)


class EventModelConfig(_Section):
    """Next-event surrogate, feature encoder and Euler trajectory head."""

    encoder_hidden: int = Field(default=32, ge=1)
    feature_dim: int = Field(default=16, ge=1)
    surrogate_hidden: int = Field(default=32, ge=1)
    state_dim: int = Field(default=8, ge=1)
    alpha_ode: float = Field(default=0.1, gt=0)
    substeps: int = Field(default=8, ge=1)
    max_events: int = Field(default=256, ge=1)
    residual_scale: float = Field(default=0.1, ge=0)
    init_scale: float = Field(default=0.1, gt=0)


class GraphConfig(_Section):
    """Event-relational graph settings."""

    alpha: float = Field(default=2.0, gt=0, description="Edge decay rate (1/s)")
    grid_points: int = Field(default=16, ge=1)
    mc_samples: int = Field(default=8, ge=1)
    window: float = Field(default=2.0, gt=0)
    sigma: float = Field(default=1.0, gt=0)
    learn_sigma: bool = False
    mode: Literal["event_lag", "trajectory"] = "event_lag"
    trajectory_kernel: Literal["exp", "gauss", "inv1"] = "exp"
    gamma: float = Field(default=1.0, gt=0)
    symmetrize: bool = True
    clamp: float = Field(default=1e-7, gt=0, lt=0.5)


class ToyConfig(_Section):
    """Synthetic toy-data protocol."""

    n_obs: int = Field(default=20, ge=1)
    noise: float = Field(default=0.07, ge=0)
    train_rates: int = Field(default=10, ge=1)
    val_rates: int = Field(default=5, ge=1)
    test_rates: int = Field(default=5, ge=1)
    seqs_per_rate: int = Field(default=10, ge=1)
    noise_sweep: list[float] = Field(default_factory=lambda: [0.05, 0.10, 0.15])


class ObjectiveWeights(_Section):
    """Weights of the regularizers in the training objective.

    The two KL terms always carry weight one. Setting ``beta`` and
    ``lambda_lif`` to zero gives the no-prior ablation.
    """

    beta: float = Field(default=0.1, ge=0, description="Graph regularizer weight")
    lambda_lif: float = Field(default=0.01, ge=0, description="Rate consistency")
    lambda_aux: float = Field(
        default=100.0, ge=0, description="Observation reconstruction"
    )


class TrainConfig(_Section):
    """Optimizer and schedule."""

    learning_rate: float = Field(default=5e-4, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=30, ge=1)
    clip_norm: float = Field(default=1.0, gt=0)
    plateau_patience: int = Field(default=15, ge=1)
    plateau_factor: float = Field(default=0.5, gt=0, lt=1)
    divergence_threshold: float = Field(default=1e6, gt=0)
    multichannel: bool = False
    channels_per_group: int = Field(default=4, ge=2)
    rate_grid: int = Field(default=32, ge=2)
    kl_steps: int = Field(
        default=5, ge=1, description="Unrolled steps entering the interval KL"
    )
    sample_mode: Literal["relaxed", "hard"] = "relaxed"
    weights: ObjectiveWeights = Field(default_factory=ObjectiveWeights)


class EvalConfig(_Section):
    """Evaluation metrics."""

    bootstrap_resamples: int = Field(default=10_000, ge=1)
    confidence: float = Field(default=0.95, gt=0, lt=1)
    rate_grid: int = Field(default=64, ge=2)


class StabilityConfig(_Section):
    """Defaults for the graph stability harness."""

    alpha: float = Field(default=2.0, gt=0)
    noise: Literal["uniform", "gaussian"] = "uniform"
    eps: float = Field(default=0.1, ge=0)
    sigma: float = Field(default=0.1, gt=0)
    channels: int = Field(default=4, ge=2)
    grid_points: int = Field(default=16, ge=1)
    samples: int = Field(default=8, ge=1)
    trials: int = Field(default=1000, ge=1)
    tau_grid: list[float] = Field(
        default_factory=lambda: [
            0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1, 0.2
        ]
    )


class AppConfig(BaseModel):
    """Main application configuration."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    app_name: str = "event-dynamics"
    seed: int = Field(default=0, ge=0, lt=2**64)
    workers: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    output_dir: Path = Field(default=Path("runs"))
    log_level: LogLevel = "INFO"

    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    prior: PriorConfig = Field(default_factory=PriorConfig)
    kl: KlConfig = Field(default_factory=KlConfig)
    mixture: MixtureConfig = Field(default_factory=MixtureConfig)
    model: EventModelConfig = Field(default_factory=EventModelConfig)
    graph: GraphConfig = Field(default_factory=GraphConfig)
    toy: ToyConfig = Field(default_factory=ToyConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    stability: StabilityConfig = Field(default_factory=StabilityConfig)


class LoggingSettings(BaseSettings):
    """Environment override for the log level."""

    model_config = SettingsConfigDict(env_prefix="EVENT_DYNAMICS_", extra="ignore")

    log_level: LogLevel | None = None


def _set_dotted(target: dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = target
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigurationError(
                f"Cannot override '{dotted}': '{key}' is not a section"
            )
        node = child
    node[keys[-1]] = value


def _merge(target: dict[str, Any], source: Mapping[str, Any]) -> None:
    for key, value in source.items():
        if isinstance(value, Mapping) and isinstance(target.get(key), dict):
            _merge(target[key], value)
        else:
            target[key] = copy.deepcopy(value)


def load_config(
    path: Path | None = None,
    overrides: dict[str, Any] | None = None,
    *,
    base: Mapping[str, Any] | None = None,
) -> AppConfig:
    """Build configuration from defaults, an optional JSON file and overrides.

    Precedence, lowest first: built-in defaults, ``base`` (such as the
    configuration stored in a checkpoint), the config file, the
    ``EVENT_DYNAMICS_LOG_LEVEL`` environment variable (log level only), then
    ``overrides`` keyed by dotted paths such as ``"train.epochs"``. Overrides
    whose value is ``None`` are skipped.

    Raises:
        ConfigurationError: If the file is unreadable or any value is invalid.
    """
    data: dict[str, Any] = {}
    if base is not None:
        _merge(data, base)
    if path is not None:
        if not path.is_file():
            raise ConfigurationError(
                f"Config file not found: {path}", details={"path": str(path)}
            )
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(
                f"Config file {path} is not valid JSON: {e}"
            ) from e
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"Config file {path} must hold a JSON object")
        _merge(data, loaded)

    env_level = LoggingSettings().log_level
    if env_level is not None:
        data["log_level"] = env_level

    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, dotted, value)

    try:
        return AppConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e


@lru_cache
def get_config() -> AppConfig:
    """Get cached default application configuration."""
    return AppConfig()
