"""Plot-data CLI command."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import typer

from event_dynamics.cli.commands.eval import SCATTER_NAME, load_predictor
from event_dynamics.cli.utils import command_config, print_error, print_success

RATES_NAME = "rate_density.csv"


def plot_data(
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
        typer.Option("--collapse-control", help="Use the constant-rate predictor"),
    ] = False,
    collapse_rate: Annotated[
        float, typer.Option("--collapse-rate", help="Rate of the control (Hz)")
    ] = 1.0,
    split: Annotated[
        str, typer.Option("--split", help="train, val or test")
    ] = "test",
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Output directory")
    ] = Path("runs/plot-data"),
    seed: Annotated[
        int | None, typer.Option("--seed", help="Root seed [default: 0]")
    ] = None,
    log_level: Annotated[
        str | None, typer.Option("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    ] = None,
) -> None:
    """Write the CSV inputs of boundary-scatter and rate-density plots.

    Nothing is rendered; the files hold one row per matched event and one
    row per record respectively.

    Examples:
        event-dynamics plot-data --ckpt runs/desk/checkpoint.json --data data
    """
    from event_dynamics import __version__
    from event_dynamics.core.exceptions import EventDynamicsError
    from event_dynamics.core.models import Split
    from event_dynamics.numerics.rng import Rng
    from event_dynamics.pipeline.evaluation import (
        evaluate_split,
        write_rates_csv,
        write_scatter_csv,
    )
    from event_dynamics.pipeline.io import RunRecorder

    try:
        chosen = Split(split)
    except ValueError:
        raise typer.BadParameter(
            f"unknown split '{split}'", param_hint="--split"
        ) from None

    try:
        predictor, ckpt_config = load_predictor(ckpt, collapse_control, collapse_rate)
        base = ckpt_config.model_dump(mode="json") if ckpt_config else None
        config = command_config(None, {"seed": seed}, log_level, base=base)
        recorder = RunRecorder(
            out,
            "plot-data",
            __version__,
            {
                "checkpoint": ckpt.as_posix() if ckpt else None,
                "collapse_control": collapse_control,
                "data": data.as_posix(),
                "split": chosen.value,
                "seed": config.seed,
            },
        )
        report, records = evaluate_split(
            predictor, data, chosen, config.eval, Rng(config.seed)
        )
        write_scatter_csv(out / SCATTER_NAME, report)
        write_rates_csv(out / RATES_NAME, report, records)
        recorder.complete([out / SCATTER_NAME, out / RATES_NAME])
    except EventDynamicsError as e:
        print_error(f"Plot data failed: {e.message}")
        raise typer.Exit(1) from None

    print_success(f"Wrote {SCATTER_NAME} and {RATES_NAME} to: {out}")
