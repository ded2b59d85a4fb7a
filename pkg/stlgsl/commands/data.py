"""
Dataset commands: planted-graph synthesis and CSV conversion
"""

from pathlib import Path
from typing import Optional

import numpy as np
import structlog
import typer

from ..services.dataset_service import (
    convert_csv,
    generate_synthetic,
    hide_edges,
    save_dataset,
    save_matrix_csv,
)
from ..services.pipeline_service import resolve_seed
from .common import console, handle_errors

logger = structlog.get_logger(__name__)


@handle_errors
def synth(
    nodes: int = typer.Option(20, "--nodes", help="Number of sensors M"),
    steps: int = typer.Option(2000, "--steps", help="Number of 5-minute steps T"),
    k_true: int = typer.Option(3, "--k-true", help="Neighbors per node in the planted graph"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed; falls back to STLGSL_SEED"),
    out: Path = typer.Option(Path("data/synthetic"), "--out", help="Output directory"),
    graph_coef: float = typer.Option(0.6, "--graph-coef"),
    seasonal_coef: float = typer.Option(0.3, "--seasonal-coef"),
    noise_std: float = typer.Option(0.01, "--noise-std", help="Std of the Gaussian innovation"),
    hide_fraction: float = typer.Option(
        0.0, "--hide-fraction", help="Share of planted edges left out of adjacency.csv"
    ),
):
    """Write a synthetic STLG dataset and its planted adjacency CSV"""
    seed = resolve_seed(seed)
    series, graph = generate_synthetic(
        nodes,
        steps,
        k_true=k_true,
        seed=seed,
        graph_coef=graph_coef,
        seasonal_coef=seasonal_coef,
        noise_std=noise_std,
    )
    observed = hide_edges(graph, hide_fraction, np.random.default_rng([seed, 1]))
    dataset_path = out / "series.stlg"
    adjacency_path = out / "adjacency.csv"
    save_dataset(series, dataset_path)
    save_matrix_csv(observed, adjacency_path)
    if hide_fraction > 0:
        save_matrix_csv(graph, out / "planted.csv")
    console.print(f"✅ Wrote {dataset_path} and {adjacency_path} (seed {seed})")


@handle_errors
def convert(
    source: Path = typer.Argument(..., help="CSV with rows = time steps, columns = nodes"),
    target: Path = typer.Argument(..., help="STLG file to write"),
    index_column: bool = typer.Option(False, "--index-column", help="First column is a timestamp index"),
):
    """Convert a plain CSV series to STLG"""
    series = convert_csv(source, target, index_column=index_column)
    console.print(
        f"✅ Wrote {target}: {series.num_nodes} nodes x {series.num_steps} steps"
    )
