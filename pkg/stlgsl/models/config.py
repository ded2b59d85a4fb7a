"""
Run configuration documents
Strict pydantic schemas for data, model and training settings
"""

import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError


class NanPolicy(str, Enum):
    """How missing readings are filled on load"""

    FFILL = "ffill"
    ZERO = "zero"


class PadMode(str, Enum):
    """Temporal convolution padding"""

    CAUSAL = "causal"
    VALID = "valid"


class SimilarityMetric(str, Enum):
    """Node-embedding similarity used by the kNN step"""

    COSINE = "cosine"


class StrictModel(BaseModel):
    """Base schema rejecting unknown keys"""

    model_config = {"extra": "forbid"}


class DataConfig(StrictModel):
    """Dataset location and preprocessing"""

    dataset: str
    adjacency: Optional[str] = None
    distances: Optional[str] = None
    sigma: Optional[float] = Field(default=None, gt=0)
    kappa: Optional[float] = Field(default=None, ge=0)
    target_feature: int = Field(default=0, ge=0)
    nan_policy: NanPolicy = NanPolicy.FFILL
    ratios: Tuple[float, float, float] = (0.7, 0.2, 0.1)
    null_value: Optional[float] = None

    @field_validator("ratios")
    @classmethod
    def ratios_sum_to_one(cls, value: Tuple[float, float, float]):
        if any(r < 0 for r in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must be non-negative and sum to 1, got {value}")
        return value

    @model_validator(mode="after")
    def one_graph_source(self):
        if self.adjacency and self.distances:
            raise ValueError("give either 'adjacency' or 'distances', not both")
        return self


class ModelConfig(StrictModel):
    """Network shape and ablation switches"""

    blocks: int = Field(default=4, ge=1)
    kernel_size: int = Field(default=2, ge=1)
    dilations: List[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    residual_channels: int = Field(default=32, ge=1)
    skip_channels: int = Field(default=64, ge=1)
    end_channels: int = Field(default=64, ge=1)
    diffusion_steps: int = Field(default=2, ge=0)
    input_length: int = Field(default=12, ge=1)
    output_length: int = Field(default=12, ge=1)
    pad: PadMode = PadMode.CAUSAL

    # Latent graph generator
    neighbors: int = Field(default=20, ge=1)
    embedding_dim: int = Field(default=64, ge=1)
    generator_hidden: List[int] = Field(default_factory=lambda: [256])
    metric: SimilarityMetric = SimilarityMetric.COSINE
    init_epochs: int = Field(default=1000, ge=0)
    init_lr: float = Field(default=1e-3, gt=0)

    # Ablations
    use_generator: bool = True
    use_predefined_init: bool = True
    symmetrize: bool = True
    use_curriculum: bool = True

    @field_validator("dilations")
    @classmethod
    def positive_dilations(cls, value: List[int]):
        if any(d < 1 for d in value):
            raise ValueError("dilations must be >= 1")
        return value

    @field_validator("generator_hidden")
    @classmethod
    def positive_widths(cls, value: List[int]):
        if any(w < 1 for w in value):
            raise ValueError("generator hidden widths must be >= 1")
        return value

    @model_validator(mode="after")
    def schedule_matches_blocks(self):
        if len(self.dilations) != self.blocks:
            raise ValueError(
                f"dilation schedule has {len(self.dilations)} entries for "
                f"{self.blocks} blocks"
            )
        return self

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(self.dilations)


class TrainConfig(StrictModel):
    """Optimization settings for the curriculum loop"""

    lr: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=64, ge=1)
    step_size: int = Field(default=100, ge=1)
    max_epochs: int = Field(default=1000, ge=1)
    tolerance: int = Field(default=100, ge=0)
    lr_decay: float = Field(default=0.97, gt=0, le=1)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    null_mask: bool = False
    eval_horizons: List[int] = Field(default_factory=lambda: [3, 6, 12])
    snapshot_epochs: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def tolerance_within_epochs(self):
        if self.tolerance > self.max_epochs:
            raise ValueError(
                f"tolerance {self.tolerance} exceeds max_epochs {self.max_epochs}"
            )
        if any(h < 1 for h in self.eval_horizons):
            raise ValueError("eval horizons are 1-based")
        return self


class RunConfig(StrictModel):
    """Complete run document: data, model, training, seed and output"""

    data: DataConfig
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    seed: Optional[int] = None
    output_dir: str = "runs/default"

    @model_validator(mode="after")
    def horizons_within_output(self):
        too_far = [h for h in self.train.eval_horizons if h > self.model.output_length]
        if too_far:
            raise ValueError(
                f"eval horizons {too_far} exceed output_length {self.model.output_length}"
            )
        return self


def _parse_override(raw: str) -> Tuple[List[str], Any]:
    if "=" not in raw:
        raise ConfigError(f"override '{raw}' must look like key.path=value")
    key, value = raw.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.strip().split("."), parsed


def apply_overrides(document: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Set dotted keys (e.g. 'train.max_epochs=30') on a raw config dict"""
    for raw in overrides:
        path, value = _parse_override(raw)
        node = document
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{raw}' walks into a non-object key")
        node[path[-1]] = value
    return document


def load_run_config(path: str, overrides: Sequence[str] = ()) -> RunConfig:
    """Read and validate a JSON run document"""
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    document = apply_overrides(document, overrides)
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc
