"""
Evaluation commands: test metrics, point forecasts and graph export
"""

from pathlib import Path
from typing import List, Optional

import typer

from ..services.pipeline_service import PipelineService
from .common import ConfigOption, OverrideOption, console, handle_errors, load_config, metrics_table

CheckpointOption = typer.Option(..., "--checkpoint", help="Checkpoint written by train or init-graph")


@handle_errors
def evaluate(
    config: str = ConfigOption,
    checkpoint: str = CheckpointOption,
    override: Optional[List[str]] = OverrideOption,
    out: Path = typer.Option(Path("metrics.csv"), "--out", help="Report CSV path"),
    with_baseline: bool = typer.Option(False, "--with-baseline", help="Also report the historical-average baseline"),
):
    """Evaluate a checkpoint on the test split at the configured horizons"""
    run = load_config(config, override)
    report, baseline = PipelineService(run).evaluate(checkpoint, out, with_baseline)
    console.print(metrics_table(report, "ST-LGSL"))
    if baseline is not None:
        console.print(metrics_table(baseline, "Historical average"))
    console.print(f"Report: {out}")


@handle_errors
def predict(
    config: str = ConfigOption,
    checkpoint: str = CheckpointOption,
    at: int = typer.Option(..., "--at", help="Last time step of the input window"),
    override: Optional[List[str]] = OverrideOption,
    out: Path = typer.Option(Path("forecast.csv"), "--out", help="Forecast CSV path"),
):
    """Forecast the next T_out steps after the window ending at --at"""
    run = load_config(config, override)
    forecast = PipelineService(run).predict(checkpoint, at, out)
    console.print(f"✅ Wrote {forecast.shape[0]} x {forecast.shape[1]} forecast to {out}")


@handle_errors
def export_graph(
    config: str = ConfigOption,
    checkpoint: str = CheckpointOption,
    override: Optional[List[str]] = OverrideOption,
    out: Path = typer.Option(Path("graph_export"), "--out", help="Output directory"),
):
    """Write the normalized adjacency as an M x M CSV"""
    run = load_config(config, override)
    path, summary = PipelineService(run).export_graph(checkpoint, out)
    console.print(f"✅ Wrote {path}")
    if summary is not None:
        console.print(
            f"vs pre-defined graph: precision {summary['precision']:.3f}, "
            f"recall {summary['recall']:.3f}, "
            f"Frobenius relative error {summary['frobenius_relative_error']:.4f}"
        )
