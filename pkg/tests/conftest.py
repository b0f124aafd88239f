"""Shared test fixtures and configuration."""

from __future__ import annotations

import tempfile
from collections.abc import Generator
from pathlib import Path

import pytest

from event_dynamics.core.config import AppConfig
from event_dynamics.core.models import Split, ToyRecord
from event_dynamics.numerics.rng import Rng
from event_dynamics.pipeline.io import generate_dataset, load_split


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create temporary directory for test outputs."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def rng() -> Rng:
    """Seeded random stream."""
    return Rng(1234)


@pytest.fixture
def small_config() -> AppConfig:
    """Configuration small enough for a full pipeline run in seconds."""
    return AppConfig.model_validate(
        {
            "seed": 7,
            "workers": 2,
            "toy": {
                "n_obs": 8,
                "train_rates": 2,
                "val_rates": 1,
                "test_rates": 1,
                "seqs_per_rate": 2,
            },
            "model": {
                "encoder_hidden": 8,
                "feature_dim": 4,
                "surrogate_hidden": 8,
                "state_dim": 4,
                "substeps": 2,
                "max_events": 16,
            },
            "kl": {"train_ode_steps": 16},
            "train": {"epochs": 2, "batch_size": 4, "rate_grid": 8},
            "eval": {"bootstrap_resamples": 200, "rate_grid": 8},
        }
    )


@pytest.fixture
def data_dir(temp_dir: Path, small_config: AppConfig) -> Path:
    """A generated toy dataset on disk."""
    out = temp_dir / "data"
    generate_dataset(small_config, out)
    return out


@pytest.fixture
def train_records(data_dir: Path) -> list[ToyRecord]:
    """Training split of the generated dataset."""
    return load_split(data_dir, Split.TRAIN)
