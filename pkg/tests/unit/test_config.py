"""Tests for configuration module."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from event_dynamics.core.config import (
    AppConfig,
    KlConfig,
    PriorConfig,
    StabilityConfig,
    TrainConfig,
    get_config,
    load_config,
)
from event_dynamics.core.exceptions import ConfigurationError


@pytest.fixture(autouse=True)
def _clear_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("EVENT_DYNAMICS_LOG_LEVEL", raising=False)


class TestSections:
    """Tests for configuration sections."""

    def test_default_values(self) -> None:
        """Test default configuration values."""
        config = AppConfig()

        assert config.app_name == "event-dynamics"
        assert config.seed == 0
        assert config.log_level == "INFO"
        assert config.kl.epsilon == 1e-3
        assert config.kl.train_ode_steps == 256
        assert config.mixture.n_components == 3
        assert config.graph.alpha == 2.0
        assert config.toy.n_obs == 20
        assert config.train.weights.lambda_aux == 100.0
        assert config.train.kl_steps == 5
        assert config.stability.noise == "uniform"

    def test_prior_bounds_ordered(self) -> None:
        """Test rate bounds must be ordered."""
        with pytest.raises(ValidationError):
            PriorConfig(rate_lo=10.0, rate_hi=1.0)

    def test_kl_epsilon_below_support(self) -> None:
        """Test epsilon must be below exp(-horizon)."""
        with pytest.raises(ValidationError):
            KlConfig(horizon=3.0, epsilon=0.1)

    def test_extra_keys_forbidden(self) -> None:
        """Test unknown keys are rejected."""
        with pytest.raises(ValidationError):
            TrainConfig.model_validate({"epochs": 3, "epoch": 3})

    def test_stability_needs_two_channels(self) -> None:
        """Test channel count validation."""
        with pytest.raises(ValidationError):
            StabilityConfig(channels=1)


class TestLoadConfig:
    """Tests for load_config."""

    def test_defaults(self) -> None:
        """Test no file and no overrides gives defaults."""
        config = load_config()

        assert config == AppConfig(workers=config.workers)

    def test_file_and_overrides(self, temp_dir: Path) -> None:
        """Test overrides win over the file."""
        path = temp_dir / "config.json"
        path.write_text(
            json.dumps({"seed": 3, "train": {"epochs": 4, "batch_size": 8}})
        )
        config = load_config(path, {"train.epochs": 9, "graph.alpha": 1.5})

        assert config.seed == 3
        assert config.train.epochs == 9
        assert config.train.batch_size == 8
        assert config.graph.alpha == 1.5

    def test_none_overrides_skipped(self) -> None:
        """Test None means no override."""
        config = load_config(overrides={"seed": None, "train.epochs": None})

        assert config.seed == 0
        assert config.train.epochs == 30

    def test_base_has_lowest_precedence(self, temp_dir: Path) -> None:
        """Test file values win over the base."""
        path = temp_dir / "config.json"
        path.write_text(json.dumps({"train": {"epochs": 4}}))
        config = load_config(
            path, base={"seed": 11, "train": {"epochs": 2, "batch_size": 16}}
        )

        assert config.seed == 11
        assert config.train.epochs == 4
        assert config.train.batch_size == 16

    def test_env_log_level(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test the environment sets the log level."""
        monkeypatch.setenv("EVENT_DYNAMICS_LOG_LEVEL", "DEBUG")

        assert load_config().log_level == "DEBUG"
        assert load_config(overrides={"log_level": "ERROR"}).log_level == "ERROR"

    def test_missing_file(self, temp_dir: Path) -> None:
        """Test a missing file is a configuration error."""
        with pytest.raises(ConfigurationError):
            load_config(temp_dir / "missing.json")

    def test_invalid_json(self, temp_dir: Path) -> None:
        """Test malformed JSON is a configuration error."""
        path = temp_dir / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_invalid_value(self) -> None:
        """Test values are validated."""
        with pytest.raises(ConfigurationError):
            load_config(overrides={"train.epochs": 0})

    def test_override_into_scalar(self) -> None:
        """Test dotted paths must name sections."""
        with pytest.raises(ConfigurationError):
            load_config(overrides={"seed.value": 1})


class TestGetConfig:
    """Tests for get_config function."""

    def test_get_config_cached(self) -> None:
        """Test that get_config returns cached instance."""
        get_config.cache_clear()
        config1 = get_config()
        config2 = get_config()

        assert config1 is config2
