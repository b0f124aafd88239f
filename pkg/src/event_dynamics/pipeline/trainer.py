"""Mini-batch Adam training with plateau scheduling and best-checkpoint selection."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from event_dynamics.core.config import AppConfig
from event_dynamics.core.exceptions import DatasetError, TrainingDiverged
from event_dynamics.core.melp import SampleMode, annealed_temperature
from event_dynamics.core.models import EpochRecord, Split, ToyRecord, TrainingLog
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.optim import AdamState, PlateauScheduler, adam_step
from event_dynamics.numerics.rng import Rng
from event_dynamics.pipeline.checkpoint import (
    Checkpoint,
    make_checkpoint,
    save_checkpoint,
)
from event_dynamics.pipeline.io import load_split, write_json
from event_dynamics.pipeline.model import CLASSES, EventModel, Params, labels
from event_dynamics.pipeline.objective import COMPONENTS, objective

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.json"
TRAINING_LOG_NAME = "training_log.json"

# stream keys below the training seed
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1
_BATCH_STREAM = 2
_VALIDATION_STREAM = 3


@dataclass
class TrainingResult:
    """Final and best parameters with the per-epoch history."""

    params: Params
    best_params: Params
    log: TrainingLog
    checkpoint: Checkpoint


def batches(
    records: Sequence[ToyRecord], order: npt.NDArray[np.int64], size: int
) -> list[list[ToyRecord]]:
    return [
        [records[i] for i in order[s : s + size]]
        for s in range(0, len(order), size)
    ]


def grouped_order(
    records: Sequence[ToyRecord], rng: Rng, channels: int
) -> npt.NDArray[np.int64]:
    """Shuffled order in which consecutive runs of ``channels`` share a band.

    Records left over after forming full groups come last.
    """
    band_of = labels(records)
    groups: list[npt.NDArray[np.int64]] = []
    leftover: list[npt.NDArray[np.int64]] = []
    for b in range(len(CLASSES)):
        idx = np.flatnonzero(band_of == b)
        idx = idx[rng.split(b).permutation(idx.size)]
        full = idx.size // channels * channels
        groups.extend(np.split(idx[:full], full // channels) if full else [])
        leftover.append(idx[full:])
    shuffled = [groups[i] for i in rng.split(len(CLASSES)).permutation(len(groups))]
    return np.concatenate([*shuffled, *leftover]).astype(np.int64)


class Trainer:
    """Runs the training loop for an :class:`EventModel`."""

    def __init__(self, config: AppConfig, model: EventModel | None = None) -> None:
        self._config = config
        self.model = model or EventModel(config)

    def validate(
        self, params: Params, records: Sequence[ToyRecord], rng: Rng
    ) -> tuple[float, float]:
        """Mixture-mean validation loss and classification accuracy."""
        weights = self._config.train.weights
        size = self._config.train.batch_size
        total = 0.0
        correct = 0
        for b, batch in enumerate(batches(records, np.arange(len(records)), size)):
            result = objective(
                batch, self.model, params, weights, rng.split(b), mode=SampleMode.MEAN
            )
            total += result.value * len(batch)
            logits = ad.value_of(result.forward.logits)  # type: ignore[union-attr]
            predicted = np.asarray(logits).argmax(axis=1)
            correct += int((predicted == labels(batch)).sum())
        return total / len(records), correct / len(records)

    def train(
        self,
        train_records: Sequence[ToyRecord],
        val_records: Sequence[ToyRecord],
        rng: Rng,
        *,
        on_epoch: Callable[[EpochRecord], None] | None = None,
    ) -> TrainingResult:
        """Train for the configured epochs and keep the best validation checkpoint.

        Raises:
            DatasetError: If either split is empty.
            TrainingDiverged: If a batch loss exceeds the divergence threshold.
            NonFiniteLoss: If a loss component is not finite.
        """
        if not train_records or not val_records:
            raise DatasetError("Training needs nonempty train and validation splits")
        cfg = self._config.train
        mix = self._config.mixture
        mode = SampleMode(cfg.sample_mode)

        params = self.model.init_params(rng.split(_INIT_STREAM))
        state = AdamState.for_params(params, cfg.learning_rate, cfg.weight_decay)
        scheduler = PlateauScheduler(cfg.plateau_patience, cfg.plateau_factor)
        log = TrainingLog()
        best_params = {k: v.copy() for k, v in params.items()}
        best_accuracy = -math.inf
        best_selected_loss = math.inf
        best_val_loss = math.inf
        learning_rate = cfg.learning_rate
        batch_size = cfg.batch_size
        if cfg.multichannel:
            # groups must not straddle batches
            batch_size = max(
                cfg.channels_per_group,
                cfg.batch_size // cfg.channels_per_group * cfg.channels_per_group,
            )

        for epoch in range(cfg.epochs):
            temperature = annealed_temperature(
                mix.temperature, mix.temperature_decay, mix.temperature_floor, epoch
            )
            shuffle = rng.split(_SHUFFLE_STREAM, epoch)
            if cfg.multichannel:
                order = grouped_order(train_records, shuffle, cfg.channels_per_group)
            else:
                order = shuffle.permutation(len(train_records))
            sums = dict.fromkeys(COMPONENTS, 0.0)
            train_loss = 0.0
            for b, batch in enumerate(batches(train_records, order, batch_size)):
                tape = ad.Tape()
                nodes = {
                    name: tape.parameter(name, value) for name, value in params.items()
                }
                result = objective(
                    batch,
                    self.model,
                    nodes,
                    cfg.weights,
                    rng.split(_BATCH_STREAM, epoch, b),
                    mode=mode,
                    temperature=temperature,
                )
                if result.value > cfg.divergence_threshold:
                    raise TrainingDiverged(
                        f"Loss {result.value:.3e} exceeded "
                        f"{cfg.divergence_threshold:.1e} at epoch {epoch}, batch {b}",
                        details={"epoch": epoch, "batch": b, "loss": result.value},
                    )
                grads = ad.tape_grad(result.total, tape)  # type: ignore[arg-type]
                params, state = adam_step(params, grads, state, cfg.clip_norm)
                if logger.isEnabledFor(logging.DEBUG):
                    parts = ", ".join(
                        f"{k}={v:.4g}" for k, v in result.components.items()
                    )
                    logger.debug(f"Epoch {epoch} batch {b}: {parts}")
                train_loss += result.value * len(batch)
                for name, value in result.components.items():
                    sums[name] += value * len(batch)

            val_loss, val_accuracy = self.validate(
                params, val_records, rng.split(_VALIDATION_STREAM, epoch)
            )
            best_val_loss = min(best_val_loss, val_loss)
            selected = val_accuracy > best_accuracy or (
                val_accuracy == best_accuracy and val_loss < best_selected_loss
            )
            if selected:
                best_accuracy = val_accuracy
                best_selected_loss = val_loss
                best_params = {k: v.copy() for k, v in params.items()}
                log.best_epoch = epoch

            n = len(train_records)
            record = EpochRecord(
                epoch=epoch,
                learning_rate=learning_rate,
                temperature=temperature,
                components={k: v / n for k, v in sums.items()},
                train_loss=train_loss / n,
                val_loss=val_loss,
                val_accuracy=val_accuracy,
                best_val_loss=best_val_loss,
                selected=selected,
            )
            log.epochs.append(record)
            logger.info(
                f"Epoch {epoch}: train {record.train_loss:.4f}, val {val_loss:.4f}, "
                f"accuracy {val_accuracy:.3f}"
            )
            if on_epoch is not None:
                on_epoch(record)

            next_rate = scheduler.step(val_accuracy, learning_rate)
            if next_rate != learning_rate:
                logger.info(f"Learning rate reduced to {next_rate:.2e}")
                learning_rate = next_rate
                state = state.with_learning_rate(learning_rate)

        best = log.best_epoch if log.best_epoch is not None else -1
        checkpoint = make_checkpoint(
            best_params,
            self._config,
            epoch=best,
            n_obs=self.model.n_obs,
            val_accuracy=best_accuracy if best >= 0 else None,
            val_loss=best_selected_loss if best >= 0 else None,
        )
        return TrainingResult(
            params=params, best_params=best_params, log=log, checkpoint=checkpoint
        )


def train_toy(
    config: AppConfig,
    data_dir: Path,
    out_dir: Path,
    *,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainingResult:
    """Train on ``data_dir``'s train/val splits and write the checkpoint and log."""
    train_records = load_split(data_dir, Split.TRAIN)
    val_records = load_split(data_dir, Split.VAL)
    n_obs = train_records[0].n_obs if train_records else config.toy.n_obs
    trainer = Trainer(config, EventModel(config, n_obs))
    result = trainer.train(
        train_records, val_records, Rng(config.seed), on_epoch=on_epoch
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / CHECKPOINT_NAME, result.checkpoint)
    write_json(out_dir / TRAINING_LOG_NAME, result.log)
    return result
