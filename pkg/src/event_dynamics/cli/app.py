"""Event dynamics CLI application."""

from __future__ import annotations

import sys
from collections.abc import Sequence

import click
import typer

from event_dynamics.cli.commands import eval as eval_cmd
from event_dynamics.cli.commands import gen, graph, klbound, plot_data, stability, train
from event_dynamics.cli.utils import console, print_error

app = typer.Typer(
    name="event-dynamics",
    help="Latent event dynamics: toy data, training, KL bounds and graph checks.",
    no_args_is_help=True,
)

app.command("gen")(gen.gen)
app.command("train")(train.train)
app.command("eval")(eval_cmd.eval_command)
app.command("klbound")(klbound.klbound)
app.command("graph")(graph.graph)
app.command("stability")(stability.stability)
app.command("plot-data")(plot_data.plot_data)


@app.command()
def version() -> None:
    """Show version information."""
    from event_dynamics import __version__

    console.print(f"event-dynamics version {__version__}")


def dispatch(argv: Sequence[str]) -> int:
    """Run one command and map its outcome to an exit code.

    Returns 0 on success, 1 on a domain error and 2 on a usage error.
    """
    from event_dynamics.core.exceptions import EventDynamicsError

    try:
        result = app(
            args=list(argv), prog_name="event-dynamics", standalone_mode=False
        )
    except click.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        print_error("Aborted")
        return 1
    except EventDynamicsError as e:
        print_error(e.message)
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:
    """CLI entry point."""
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
