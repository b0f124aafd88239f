"""JSON checkpoints holding parameters and the configuration that produced them."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from event_dynamics import __version__
from event_dynamics.core.config import AppConfig
from event_dynamics.core.exceptions import CheckpointError

logger = logging.getLogger(__name__)

Params = dict[str, npt.NDArray[np.float64]]


class TensorRecord(BaseModel):
    """A named array flattened in C order."""

    model_config = ConfigDict(extra="forbid")

    shape: list[int]
    data: list[float]


class Checkpoint(BaseModel):
    """Serialized model state."""

    model_config = ConfigDict(extra="forbid")

    version: str = __version__
    epoch: int = Field(ge=-1)
    n_obs: int = Field(ge=1)
    val_accuracy: float | None = None
    val_loss: float | None = None
    config: dict[str, Any]
    params: dict[str, TensorRecord]

    def arrays(self) -> Params:
        """Parameters as float64 arrays.

        Raises:
            CheckpointError: If a record's data does not fill its shape.
        """
        out: Params = {}
        for name, record in self.params.items():
            flat = np.asarray(record.data, dtype=np.float64)
            if flat.size != int(np.prod(record.shape, dtype=np.int64)):
                raise CheckpointError(
                    f"Parameter '{name}' has {flat.size} values "
                    f"for shape {record.shape}",
                    details={"parameter": name},
                )
            out[name] = flat.reshape(record.shape)
        return out

    def app_config(self) -> AppConfig:
        try:
            return AppConfig.model_validate(self.config)
        except ValidationError as e:
            raise CheckpointError(f"Checkpoint carries an invalid config: {e}") from e


def make_checkpoint(
    params: Params,
    config: AppConfig,
    *,
    epoch: int,
    n_obs: int,
    val_accuracy: float | None = None,
    val_loss: float | None = None,
) -> Checkpoint:
    return Checkpoint(
        epoch=epoch,
        n_obs=n_obs,
        val_accuracy=val_accuracy,
        val_loss=val_loss,
        config=config.model_dump(mode="json"),
        params={
            name: TensorRecord(
                shape=list(value.shape), data=np.asarray(value).reshape(-1).tolist()
            )
            for name, value in sorted(params.items())
        },
    )


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(checkpoint.model_dump(mode="json"), sort_keys=True) + "\n",
        encoding="utf-8",
    )
    logger.info(f"Saved checkpoint for epoch {checkpoint.epoch} to {path}")


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint file.

    Raises:
        CheckpointError: If the file is missing or malformed.
    """
    if not path.is_file():
        raise CheckpointError(
            f"Checkpoint not found: {path}", details={"path": str(path)}
        )
    try:
        checkpoint = Checkpoint.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise CheckpointError(f"Invalid checkpoint {path}: {e}") from e
    checkpoint.arrays()
    return checkpoint
