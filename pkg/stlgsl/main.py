"""
ST-LGSL Traffic Forecaster - command line entry point
Latent graph structure learning for spatio-temporal traffic forecasting
"""

from typing import Optional

import structlog
import typer

from . import autodiff
from .commands import convert, evaluate, export_graph, init_graph, predict, synth, train
from .config import settings
from .errors import StlgslError
from .utils.logging import setup_logging

logger = structlog.get_logger(__name__)


def create_app() -> typer.Typer:
    """Assemble the CLI"""
    app = typer.Typer(
        name="stlgsl",
        help=f"{settings.APP_NAME} v{settings.VERSION}",
        no_args_is_help=True,
        add_completion=False,
    )

    @app.callback()
    def configure(
        log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides STLGSL_LOG_LEVEL"),
    ):
        setup_logging(log_level)
        try:
            autodiff.set_precision(settings.PRECISION)
        except StlgslError as exc:
            typer.echo(f"Error: {exc}", err=True)
            raise typer.Exit(code=exc.exit_code) from exc

    app.command("synth")(synth)
    app.command("convert")(convert)
    app.command("init-graph")(init_graph)
    app.command("train")(train)
    app.command("eval")(evaluate)
    app.command("predict")(predict)
    app.command("export-graph")(export_graph)
    return app


app = create_app()


def main() -> None:
    app()


if __name__ == "__main__":
    main()
