"""Gen CLI command."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import typer

from event_dynamics.cli.utils import (
    command_config,
    console,
    print_error,
    print_success,
    spinner,
)

BAND_CHOICES = ("low", "mid", "high", "all")


def noise_dir(out: Path, noise: float) -> Path:
    """Subdirectory of one noise-sweep level."""
    return out / f"noise_{noise:.2f}"


def gen(
    band: Annotated[
        list[str] | None,
        typer.Option("--band", "-b", help="low, mid, high or all; repeatable"),
    ] = None,
    rates: Annotated[
        int | None,
        typer.Option("--rates", help="Training rates per band [default: 10]"),
    ] = None,
    val_rates: Annotated[
        int | None,
        typer.Option("--val-rates", help="Validation rates per band [default: 5]"),
    ] = None,
    test_rates: Annotated[
        int | None,
        typer.Option("--test-rates", help="Test rates per band [default: 5]"),
    ] = None,
    seqs: Annotated[
        int | None,
        typer.Option("--seqs", help="Sequences per rate [default: 10]"),
    ] = None,
    n_obs: Annotated[
        int | None,
        typer.Option("--n-obs", help="Observations per sequence [default: 20]"),
    ] = None,
    noise: Annotated[
        float | None,
        typer.Option("--noise", help="Observation noise std [default: 0.07]"),
    ] = None,
    sweep_noise: Annotated[
        bool,
        typer.Option(
            "--sweep-noise",
            help="Write one dataset per toy.noise_sweep level into noise_<level>/",
        ),
    ] = False,
    seed: Annotated[
        int | None, typer.Option("--seed", help="Root seed [default: 0]")
    ] = None,
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Output directory")
    ] = Path("data"),
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
    """Generate band-labelled toy sequences as JSON-lines splits.

    Examples:
        event-dynamics gen --band low --rates 10 --seqs 10 --seed 7
        event-dynamics gen --sweep-noise --out data/sweep
    """
    from event_dynamics import __version__
    from event_dynamics.core.exceptions import EventDynamicsError
    from event_dynamics.core.toygen import DEFAULT_BANDS, band_by_name
    from event_dynamics.pipeline.io import (
        DATASET_MANIFEST_NAME,
        RunRecorder,
        generate_dataset,
    )

    names = band or ["all"]
    unknown = sorted(set(names) - set(BAND_CHOICES))
    if unknown:
        raise typer.BadParameter(
            f"unknown band {', '.join(unknown)}; choose from "
            + ", ".join(BAND_CHOICES),
            param_hint="--band",
        )

    try:
        config = command_config(
            config_path,
            {
                "seed": seed,
                "workers": workers,
                "toy.train_rates": rates,
                "toy.val_rates": val_rates,
                "toy.test_rates": test_rates,
                "toy.seqs_per_rate": seqs,
                "toy.n_obs": n_obs,
                "toy.noise": noise,
            },
            log_level,
        )
        bands = (
            list(DEFAULT_BANDS)
            if "all" in names
            else [band_by_name(n) for n in dict.fromkeys(names)]
        )
        levels = config.toy.noise_sweep if sweep_noise else [config.toy.noise]
        recorder = RunRecorder(
            out,
            "gen",
            __version__,
            {
                "config": config.model_dump(mode="json"),
                "bands": [b.name.value for b in bands],
                "noise_levels": levels,
            },
        )

        artifacts: list[Path] = []
        with spinner() as progress:
            for level in levels:
                target = noise_dir(out, level) if sweep_noise else out
                progress.add_task(description=f"Generating {target}...", total=None)
                manifest = generate_dataset(config, target, bands=bands, noise=level)
                artifacts.append(target / DATASET_MANIFEST_NAME)
                artifacts.extend(target / name for name in manifest.files)
                counts = ", ".join(f"{k}={v}" for k, v in manifest.counts.items())
                console.print(f"noise {level:g}: {counts}")
        recorder.complete(artifacts)
    except EventDynamicsError as e:
        print_error(f"Generation failed: {e.message}")
        raise typer.Exit(1) from None

    print_success(f"Dataset written to: {out}")
