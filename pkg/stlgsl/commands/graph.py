"""
Graph commands: generator pre-initialization
"""

from typing import List, Optional

import typer

from ..services.pipeline_service import PipelineService
from .common import ConfigOption, OverrideOption, SeedOption, console, handle_errors, load_config


@handle_errors
def init_graph(
    config: str = ConfigOption,
    override: Optional[List[str]] = OverrideOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = typer.Option(None, "--out", help="Output directory (default: config output_dir)"),
):
    """Pre-train the latent graph generator toward the pre-defined adjacency"""
    run = load_config(config, override)
    service = PipelineService(run, seed, out)
    _, init = service.init_graph()
    if init.losses:
        console.print(
            f"✅ Generator initialized over {len(init.losses) - 1} epochs: "
            f"loss {init.losses[0]:.6f} -> {init.losses[-1]:.6f} "
            f"({init.reduction:.1%} lower)"
        )
    else:
        console.print("Generator initialization skipped (init_epochs=0 or use_predefined_init=false)")
    console.print(f"Checkpoint: {service.output_dir / 'init.ckpt'}")
