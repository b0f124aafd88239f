"""CLI utility functions."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from rich.console import Console
from rich.logging import RichHandler
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from event_dynamics.core.config import AppConfig, load_config
from event_dynamics.core.models import EvalReport, StabilityReport

console = Console()
error_console = Console(stderr=True)


def print_success(message: str) -> None:
    """Print success message in green."""
    console.print(f"[bold green][SUCCESS][/bold green] {message}")


def print_error(message: str) -> None:
    """Print error message in red."""
    error_console.print(f"[bold red][ERROR][/bold red] {message}")


def print_warning(message: str) -> None:
    """Print warning message in yellow."""
    console.print(f"[bold yellow][WARNING][/bold yellow] {message}")


def print_info(message: str) -> None:
    """Print info message."""
    console.print(f"[bold blue][INFO][/bold blue] {message}")


def spinner() -> Progress:
    """Transient spinner for long-running steps."""
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
        transient=True,
    )


def setup_logging(level: str) -> None:
    """Route library logging to stderr through rich.

    Replaces handlers installed by an earlier call, so repeated commands in
    one process do not log twice.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_event_dynamics", False):
            root.removeHandler(handler)
    handler = RichHandler(console=error_console, show_path=False, rich_tracebacks=True)
    handler._event_dynamics = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(level)


def command_config(
    config_path: Path | None,
    overrides: dict[str, Any],
    log_level: str | None,
    *,
    base: Mapping[str, Any] | None = None,
) -> AppConfig:
    """Load configuration for a command and configure logging from it.

    Raises:
        ConfigurationError: If the file or an override is invalid.
    """
    if log_level is not None:
        overrides = {**overrides, "log_level": log_level.upper()}
    config = load_config(config_path, overrides, base=base)
    setup_logging(config.log_level)
    return config


def print_eval_summary(report: EvalReport) -> None:
    """Per-band rate recovery table."""
    table = Table(title="Rate recovery")
    table.add_column("Band")
    table.add_column("Records", justify="right")
    table.add_column("Median (Hz)", justify="right")
    table.add_column("95% CI", justify="right")
    table.add_column("IoU", justify="right")
    for band in report.bands:
        table.add_row(
            band.band.value,
            str(band.n_records),
            f"{band.median_rate:.3f}",
            f"[{band.ci_lo:.3f}, {band.ci_hi:.3f}]",
            f"{band.iou:.3f}",
        )
    console.print(table)
    console.print(f"Mean cosine similarity: {report.mean_cosine_similarity:.4f}")
    if report.accuracy is not None:
        console.print(
            f"Accuracy: {report.accuracy:.3f}  Macro-F1: {report.macro_f1:.3f}"
        )


def print_stability_summary(report: StabilityReport) -> None:
    """Worst observed deviations or per-threshold outcomes of a stability run."""
    if report.trials:
        worst = max(t.max_deviation for t in report.trials)
        worst_fro = max(t.frobenius_deviation for t in report.trials)
        first = report.trials[0]
        console.print(
            f"Max |Delta| {worst:.3e} (bound {first.entry_bound:.3e}), "
            f"max ||Delta||_F {worst_fro:.3e} (bound {first.frobenius_bound:.3e})"
        )
    if report.tail:
        table = Table(title="Tail frequencies")
        for column in ("tau", "bound", "frequency", "violated"):
            table.add_column(column, justify="right")
        for row in report.tail:
            table.add_row(
                f"{row.tau:g}",
                f"{row.bound:.3e}",
                f"{row.frequency:.3e}",
                str(row.violated),
            )
        console.print(table)
    for row in report.expectation:
        console.print(
            f"E|{row.quantity}| {row.mean:.4e} +/- {row.standard_error:.1e} "
            f"(bound {row.bound:.4e})"
        )
