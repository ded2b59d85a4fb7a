"""
Training command
"""

from typing import List, Optional

import typer
from rich.table import Table

from ..errors import ConfigError
from ..services.pipeline_service import PipelineService
from .common import ConfigOption, OverrideOption, SeedOption, console, handle_errors, load_config, metrics_table


@handle_errors
def train(
    config: str = ConfigOption,
    override: Optional[List[str]] = OverrideOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = typer.Option(None, "--out", help="Output directory (default: config output_dir)"),
    repeats: int = typer.Option(1, "--repeats", help="Train this many consecutive seeds and summarize"),
    init_from: Optional[str] = typer.Option(None, "--init-from", help="Start from a checkpoint, e.g. init.ckpt"),
):
    """Run curriculum training and write checkpoint, history and test metrics"""
    run = load_config(config, override)
    if repeats < 1:
        raise ConfigError(f"--repeats must be >= 1, got {repeats}")

    if repeats > 1:
        if init_from:
            raise ConfigError("--init-from cannot be combined with --repeats")
        summary = PipelineService(run, seed, out).train_repeats(repeats)
        table = Table(title=f"Test metrics over {repeats} seeds")
        table.add_column("metric")
        table.add_column("mean±std", justify="right")
        for _, row in summary.iterrows():
            table.add_row(row["metric"], row["formatted"])
        console.print(table)
        return

    outcome = PipelineService(run, seed, out).train(init_from)
    state = outcome.result.state
    console.print(
        f"✅ Trained {len(state.history)} epochs; best epoch {state.best_epoch} "
        f"(val MAE {state.best_val_mae:.4f})"
    )
    if outcome.test_report is not None:
        console.print(metrics_table(outcome.test_report, "Test metrics"))
    console.print(f"Artifacts: {outcome.output_dir}")
