"""
Shared CLI plumbing: console, option types and error translation
"""

import functools
from typing import Any, Callable, List, NoReturn, Optional, TypeVar

import structlog
import typer
from rich.console import Console
from rich.table import Table

from ..errors import DataError, StlgslError
from ..models.config import RunConfig, load_run_config
from ..models.reports import MetricsReport

logger = structlog.get_logger(__name__)

console = Console()
error_console = Console(stderr=True)

F = TypeVar("F", bound=Callable[..., Any])

ConfigOption = typer.Option(..., "--config", "-c", help="JSON run config")
OverrideOption = typer.Option(
    None, "--override", "-o", help="Dotted key=value override, e.g. train.max_epochs=30"
)
SeedOption = typer.Option(None, "--seed", help="Seed; falls back to STLGSL_SEED")


def _fail(command: str, exc: StlgslError) -> NoReturn:
    logger.error("❌ Command failed", command=command, error=str(exc))
    error_console.print(f"[bold red]Error:[/bold red] {exc}")
    raise typer.Exit(code=exc.exit_code) from exc


def handle_errors(command: F) -> F:
    """Map toolkit errors to their exit codes"""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except StlgslError as exc:
            _fail(command.__name__, exc)
        except OSError as exc:
            _fail(command.__name__, DataError(f"file system error: {exc}"))

    return wrapper  # type: ignore[return-value]


def load_config(path: str, overrides: Optional[List[str]]) -> RunConfig:
    return load_run_config(path, overrides or [])


def metrics_table(report: MetricsReport, title: str) -> Table:
    table = Table(title=title)
    for column in ("horizon", "MAE", "RMSE", "MAPE (%)"):
        table.add_column(column, justify="right")
    for row in report.rows():
        table.add_row(row.horizon, f"{row.mae:.4f}", f"{row.rmse:.4f}", f"{row.mape_percent:.2f}")
    return table
