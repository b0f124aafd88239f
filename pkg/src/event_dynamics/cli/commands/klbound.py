"""Klbound CLI command."""

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

REPORT_NAME = "klbound.json"


def klbound(
    spec: Annotated[
        Path,
        typer.Option("--spec", "-s", help="Problem JSON with q, r, horizon, epsilon"),
    ],
    ode_steps: Annotated[
        int | None,
        typer.Option("--ode-steps", min=1, help="RK4 steps [default: 1024]"),
    ] = None,
    oracle: Annotated[
        bool,
        typer.Option("--oracle/--no-oracle", help="Also compute the quadrature KL"),
    ] = True,
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Run directory")
    ] = Path("runs/klbound"),
    log_level: Annotated[
        str | None, typer.Option("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    ] = None,
) -> None:
    """Evaluate the IVP upper bound on KL(q || renewal prior) for a problem spec.

    Examples:
        event-dynamics klbound --spec problems/exp2_vs_1.json
        event-dynamics klbound --spec p.json --ode-steps 4096 --out runs/kl
    """
    from event_dynamics import __version__
    from event_dynamics.core.exceptions import EventDynamicsError
    from event_dynamics.core.ivp_kl import bound_report
    from event_dynamics.core.models import KlProblemSpec
    from event_dynamics.pipeline.io import RunRecorder, read_json_model, write_json

    try:
        config = command_config(None, {"kl.ode_steps": ode_steps}, log_level)
        problem = read_json_model(spec, KlProblemSpec, "Problem spec")
        recorder = RunRecorder(
            out,
            "klbound",
            __version__,
            {
                "spec": problem.model_dump(mode="json"),
                "ode_steps": config.kl.ode_steps,
                "oracle": oracle,
            },
        )
        report = bound_report(problem, config.kl.ode_steps, with_oracle=oracle)
        write_json(out / REPORT_NAME, report)
        recorder.complete([out / REPORT_NAME])
    except EventDynamicsError as e:
        print_error(f"KL bound failed: {e.message}")
        raise typer.Exit(1) from None

    console.print(f"U_eps      {report.u_eps:.10g}")
    console.print(f"G(-eps)    {report.g_eps:.10g}")
    console.print(f"tail       {report.tail:.10g}")
    if report.oracle is not None and report.gap is not None:
        console.print(f"oracle KL  {report.oracle:.10g}")
        console.print(f"gap        {report.gap:.3e}")
    print_success(f"Report saved to: {out / REPORT_NAME}")
