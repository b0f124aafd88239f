"""Eval CLI command."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Annotated

import typer

from event_dynamics.cli.utils import (
    command_config,
    print_error,
    print_eval_summary,
    print_success,
    spinner,
)

if TYPE_CHECKING:
    from event_dynamics.core.config import AppConfig
    from event_dynamics.pipeline.evaluation import Predictor

REPORT_NAME = "report.json"
SCATTER_NAME = "boundary_scatter.csv"


def load_predictor(
    ckpt: Path | None, collapse_control: bool, collapse_rate: float
) -> tuple[Predictor, AppConfig | None]:
    """Predictor for a checkpoint or the constant-rate control.

    Returns the checkpoint's configuration alongside, when there is one.

    Raises:
        typer.BadParameter: If neither or both sources are given.
        CheckpointError: If the checkpoint cannot be read.
    """
    from event_dynamics.pipeline.checkpoint import load_checkpoint
    from event_dynamics.pipeline.evaluation import (
        ConstantRatePredictor,
        ModelPredictor,
    )

    if collapse_control == (ckpt is not None):
        raise typer.BadParameter(
            "give exactly one of --ckpt or --collapse-control", param_hint="--ckpt"
        )
    if collapse_control:
        return ConstantRatePredictor(rate=collapse_rate), None
    assert ckpt is not None
    checkpoint = load_checkpoint(ckpt)
    return ModelPredictor.from_checkpoint(checkpoint), checkpoint.app_config()


def eval_command(
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
    ckpt: Annotated[
        Path | None, typer.Option("--ckpt", help="Checkpoint written by train")
    ] = None,
    collapse_control: Annotated[
        bool,
        typer.Option(
            "--collapse-control",
            help="Evaluate a frozen constant-rate predictor instead of a checkpoint",
        ),
    ] = False,
    collapse_rate: Annotated[
        float, typer.Option("--collapse-rate", help="Rate of the control (Hz)")
    ] = 1.0,
    split: Annotated[
        str, typer.Option("--split", help="train, val or test")
    ] = "test",
    report: Annotated[
        Path | None,
        typer.Option(
            "--report", "-r", help=f"Report path [default: <out>/{REPORT_NAME}]"
        ),
    ] = None,
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Run directory")
    ] = Path("runs/eval"),
    config_path: Annotated[
        Path | None,
        typer.Option(
            "--config", "-c", help="JSON config; defaults to the checkpoint's"
        ),
    ] = None,
    seed: Annotated[
        int | None, typer.Option("--seed", help="Bootstrap seed [default: 0]")
    ] = None,
    resamples: Annotated[
        int | None,
        typer.Option("--resamples", help="Bootstrap resamples [default: 10000]"),
    ] = None,
    log_level: Annotated[
        str | None, typer.Option("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    ] = None,
) -> None:
    """Score a checkpoint on a split: similarity, rate recovery and accuracy.

    Examples:
        event-dynamics eval --ckpt runs/desk/checkpoint.json --data data
        event-dynamics eval --collapse-control --data data --out runs/control
    """
    from event_dynamics import __version__
    from event_dynamics.core.exceptions import EventDynamicsError
    from event_dynamics.core.models import Split
    from event_dynamics.numerics.rng import Rng
    from event_dynamics.pipeline.evaluation import evaluate_split, write_scatter_csv
    from event_dynamics.pipeline.io import RunRecorder, write_json

    try:
        chosen = Split(split)
    except ValueError:
        raise typer.BadParameter(
            f"unknown split '{split}'", param_hint="--split"
        ) from None
    report_path = report or out / REPORT_NAME
    overrides = {"seed": seed, "eval.bootstrap_resamples": resamples}

    try:
        predictor, ckpt_config = load_predictor(ckpt, collapse_control, collapse_rate)
        base = ckpt_config.model_dump(mode="json") if ckpt_config else None
        config = command_config(config_path, overrides, log_level, base=base)
        recorder = RunRecorder(
            out,
            "eval",
            __version__,
            {
                "config": config.model_dump(mode="json"),
                "checkpoint": ckpt.as_posix() if ckpt else None,
                "collapse_control": collapse_control,
                "collapse_rate": collapse_rate if collapse_control else None,
                "data": data.as_posix(),
                "split": chosen.value,
            },
        )
        with spinner() as progress:
            progress.add_task(description="Evaluating...", total=None)
            result, _ = evaluate_split(
                predictor, data, chosen, config.eval, Rng(config.seed)
            )
        write_json(report_path, result)
        write_scatter_csv(out / SCATTER_NAME, result)
        recorder.complete([report_path, out / SCATTER_NAME])
    except EventDynamicsError as e:
        print_error(f"Evaluation failed: {e.message}")
        raise typer.Exit(1) from None

    print_eval_summary(result)
    print_success(f"Report saved to: {report_path}")
