"""Graph CLI command."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import typer

from event_dynamics.cli.utils import (
    command_config,
    console,
    print_error,
    print_success,
)

SUMMARY_NAME = "graph.json"
PEARSON_NAME = "pearson.csv"
EVENT_LAG_NAME = "event_lag.csv"
TRAJECTORY_NAME = "trajectory.csv"


def graph(
    observations: Annotated[
        Path,
        typer.Option(
            "--observations", "-x", help="CSV holding one channel per row"
        ),
    ],
    events: Annotated[
        Path | None,
        typer.Option(
            "--events",
            "-e",
            help="JSON event samples; without it events come from the renewal prior",
        ),
    ] = None,
    rate: Annotated[
        float,
        typer.Option("--rate", help="Prior rate (Hz) when sampling events"),
    ] = 12.5,
    alpha: Annotated[
        float | None, typer.Option("--alpha", help="Edge decay rate [default: 2.0]")
    ] = None,
    grid_points: Annotated[
        int | None, typer.Option("--grid-points", help="Time grid size [default: 16]")
    ] = None,
    mc_samples: Annotated[
        int | None,
        typer.Option("--mc-samples", help="Sampled realizations [default: 8]"),
    ] = None,
    window: Annotated[
        float | None,
        typer.Option("--window", help="Sampling window (s) [default: 2.0]"),
    ] = None,
    gamma: Annotated[
        float | None,
        typer.Option("--gamma", help="Trajectory kernel scale [default: 1.0]"),
    ] = None,
    kernel: Annotated[
        str | None,
        typer.Option("--kernel", help="Trajectory kernel: exp, gauss or inv1"),
    ] = None,
    seed: Annotated[
        int | None, typer.Option("--seed", help="Root seed [default: 0]")
    ] = None,
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Output directory")
    ] = Path("runs/graph"),
    config_path: Annotated[
        Path | None, typer.Option("--config", "-c", help="JSON config file")
    ] = None,
    workers: Annotated[
        int | None, typer.Option("--workers", "-w", help="Worker threads")
    ] = None,
    log_level: Annotated[
        str | None, typer.Option("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    ] = None,
) -> None:
    """Build Pearson, event-lag and trajectory adjacencies for one recording.

    Examples:
        event-dynamics graph --observations obs.csv --events events.json
        event-dynamics graph --observations obs.csv --rate 8 --mc-samples 32
    """
    import numpy as np

    from event_dynamics import __version__
    from event_dynamics.core.erg import (
        realizations_from_samples,
        sample_prior_realizations,
        summarize_graphs,
    )
    from event_dynamics.core.exceptions import EventDynamicsError
    from event_dynamics.core.models import EventSamples
    from event_dynamics.numerics.rng import Rng
    from event_dynamics.pipeline.io import (
        RunRecorder,
        read_json_model,
        read_observation_csv,
        write_json,
    )

    if not rate > 0:
        raise typer.BadParameter("rate must be positive", param_hint="--rate")

    try:
        config = command_config(
            config_path,
            {
                "seed": seed,
                "workers": workers,
                "graph.alpha": alpha,
                "graph.grid_points": grid_points,
                "graph.mc_samples": mc_samples,
                "graph.window": window,
                "graph.gamma": gamma,
                "graph.trajectory_kernel": kernel,
            },
            log_level,
        )
        g = config.graph
        x = read_observation_csv(observations)
        recorder = RunRecorder(
            out,
            "graph",
            __version__,
            {
                "graph": g.model_dump(mode="json"),
                "seed": config.seed,
                "observations": observations.as_posix(),
                "events": events.as_posix() if events else None,
                "rate": None if events else rate,
            },
        )
        if events is not None:
            samples = realizations_from_samples(
                read_json_model(events, EventSamples, "Event samples")
            )
        else:
            samples = sample_prior_realizations(
                rate,
                x.shape[0],
                g.window,
                g.mc_samples,
                Rng(config.seed),
                workers=config.workers,
            )
        summary, event_lag, trajectory = summarize_graphs(
            x,
            samples,
            alpha=g.alpha,
            grid_points=g.grid_points,
            gamma=g.gamma,
            kernel=g.trajectory_kernel,
            sigma=g.sigma,
            symmetrize=g.symmetrize,
            clamp=g.clamp,
            seed=None if events else config.seed,
        )
        write_json(out / SUMMARY_NAME, summary)
        np.savetxt(
            out / PEARSON_NAME, np.asarray(summary.pearson), delimiter=",", fmt="%.17g"
        )
        event_lag.write_csv(out / EVENT_LAG_NAME)
        trajectory.write_csv(out / TRAJECTORY_NAME)
        recorder.complete(
            out / name
            for name in (SUMMARY_NAME, PEARSON_NAME, EVENT_LAG_NAME, TRAJECTORY_NAME)
        )
    except EventDynamicsError as e:
        print_error(f"Graph construction failed: {e.message}")
        raise typer.Exit(1) from None

    for name, value in summary.fisher_z.items():
        console.print(f"Fisher-z fit ({name}): {value:.6g}")
    print_success(f"Adjacencies written to: {out}")
