"""Train CLI command."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import typer

from event_dynamics.cli.utils import (
    command_config,
    console,
    print_error,
    print_info,
    print_success,
)


def train(
    data: Annotated[
        Path,
        typer.Option(
            "--data",
            "-d",
            help="Dataset directory written by gen",
            exists=True,
            file_okay=False,
            dir_okay=True,
        ),
    ],
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Run directory")
    ] = Path("runs/train"),
    config_path: Annotated[
        Path | None, typer.Option("--config", "-c", help="JSON config file")
    ] = None,
    seed: Annotated[
        int | None, typer.Option("--seed", help="Root seed [default: 0]")
    ] = None,
    epochs: Annotated[
        int | None, typer.Option("--epochs", help="Training epochs [default: 30]")
    ] = None,
    batch_size: Annotated[
        int | None, typer.Option("--batch-size", help="Batch size [default: 64]")
    ] = None,
    learning_rate: Annotated[
        float | None, typer.Option("--lr", help="Adam learning rate [default: 5e-4]")
    ] = None,
    multichannel: Annotated[
        bool | None,
        typer.Option(
            "--multichannel/--single-channel",
            help="Group same-band records into pseudo-channels for the graph term",
        ),
    ] = None,
    workers: Annotated[
        int | None, typer.Option("--workers", "-w", help="Worker threads")
    ] = None,
    log_level: Annotated[
        str | None, typer.Option("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    ] = None,
) -> None:
    """Train the event model on a toy dataset and keep the best checkpoint.

    Examples:
        event-dynamics train --data data --out runs/desk --config configs/desk.json
        event-dynamics train --data data --epochs 2 --seed 3
    """
    from event_dynamics import __version__
    from event_dynamics.core.exceptions import EventDynamicsError
    from event_dynamics.core.models import EpochRecord
    from event_dynamics.pipeline.io import RunRecorder
    from event_dynamics.pipeline.trainer import (
        CHECKPOINT_NAME,
        TRAINING_LOG_NAME,
        train_toy,
    )

    def report(record: EpochRecord) -> None:
        marker = " [green]*[/green]" if record.selected else ""
        console.print(
            f"epoch {record.epoch:3d}  train {record.train_loss:.4f}  "
            f"val {record.val_loss:.4f}  acc {record.val_accuracy:.3f}{marker}"
        )

    try:
        config = command_config(
            config_path,
            {
                "seed": seed,
                "workers": workers,
                "train.epochs": epochs,
                "train.batch_size": batch_size,
                "train.learning_rate": learning_rate,
                "train.multichannel": multichannel,
            },
            log_level,
        )
        recorder = RunRecorder(
            out,
            "train",
            __version__,
            {"config": config.model_dump(mode="json"), "data": data.as_posix()},
        )
        print_info(
            f"Training {config.train.epochs} epochs, batch size "
            f"{config.train.batch_size}, seed {config.seed}"
        )
        result = train_toy(config, data, out, on_epoch=report)
        recorder.complete([out / CHECKPOINT_NAME, out / TRAINING_LOG_NAME])
    except EventDynamicsError as e:
        print_error(f"Training failed: {e.message}")
        raise typer.Exit(1) from None

    best = result.log.best_epoch
    print_success(f"Checkpoint (epoch {best}) saved to: {out / CHECKPOINT_NAME}")
