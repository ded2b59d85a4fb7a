"""
Checkpoint Service - versioned parameter files
Header, embedded JSON describing the model, then little-endian float32 tensors
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import structlog

from ..errors import ConfigError, DataError
from ..models.config import ModelConfig
from ..models.series import Normalizer
from .forecaster import GraphInputs, ModelParams, model_init

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"STCK"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sII")  # magic, version, JSON length

_NORMALIZER_MEAN = "normalizer.mean"
_NORMALIZER_STD = "normalizer.std"


@dataclass
class Checkpoint:
    """Decoded checkpoint contents"""

    config: ModelConfig
    num_nodes: int
    num_features: int
    history_length: int
    tensors: Dict[str, np.ndarray]
    normalizer: Optional[Normalizer] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def needs_predefined_graph(self) -> bool:
        return any(".diffusion.forward." in name for name in self.tensors)


def save_checkpoint(
    params: ModelParams,
    path: PathLike,
    normalizer: Optional[Normalizer] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> None:
    """Write parameters, normalizer statistics and the model config"""
    arrays: Dict[str, np.ndarray] = dict(params.state_dict())
    if normalizer is not None:
        arrays[_NORMALIZER_MEAN] = normalizer.mean
        arrays[_NORMALIZER_STD] = normalizer.std

    index = []
    chunks = []
    offset = 0
    for name, array in arrays.items():
        data = np.ascontiguousarray(array, dtype="<f4").tobytes(order="C")
        index.append({"name": name, "shape": list(array.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)

    document = {
        "model": params.config.model_dump(mode="json"),
        "num_nodes": params.num_nodes,
        "num_features": params.num_features,
        "history_length": params.graph.history_length,
        "tensors": index,
        "metadata": metadata or {},
    }
    encoded = json.dumps(document, sort_keys=True).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(
        _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(encoded))
        + encoded
        + b"".join(chunks)
    )
    logger.info("💾 Checkpoint saved", path=str(path), tensors=len(index), bytes=offset)


def load_checkpoint(path: PathLike) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc

    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: file too short for a checkpoint header")
    magic, version, length = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")

    body_start = _HEADER.size + length
    try:
        document = json.loads(raw[_HEADER.size:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header ({exc})") from exc
    payload = raw[body_start:]

    tensors: Dict[str, np.ndarray] = {}
    for entry in document["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(payload):
            raise DataError(f"{path}: tensor {entry['name']} runs past the payload")
        tensors[entry["name"]] = (
            np.frombuffer(payload[start:end], dtype="<f4").reshape(shape).copy()
        )

    normalizer = None
    if _NORMALIZER_MEAN in tensors:
        normalizer = Normalizer(
            mean=tensors.pop(_NORMALIZER_MEAN).astype(np.float64),
            std=tensors.pop(_NORMALIZER_STD).astype(np.float64),
        )

    return Checkpoint(
        config=ModelConfig.model_validate(document["model"]),
        num_nodes=document["num_nodes"],
        num_features=document["num_features"],
        history_length=document["history_length"],
        tensors=tensors,
        normalizer=normalizer,
        metadata=document.get("metadata", {}),
    )


def restore_model(checkpoint: Checkpoint, graph: GraphInputs) -> ModelParams:
    """Rebuild ModelParams around the graph inputs of the current data"""
    if checkpoint.needs_predefined_graph and graph.a_pre is None:
        raise ConfigError("checkpoint was trained with a pre-defined adjacency; config gives none")
    if not checkpoint.needs_predefined_graph and graph.a_pre is not None:
        if checkpoint.config.use_generator:
            logger.warning("Ignoring adjacency: checkpoint uses the latent-only diffusion form")
            graph = GraphInputs(generator_input=graph.generator_input)
    if graph.generator_input is not None and graph.history_length != checkpoint.history_length:
        raise ConfigError(
            f"generator history length {graph.history_length} differs from the "
            f"checkpoint's {checkpoint.history_length}"
        )

    params = model_init(
        checkpoint.config,
        num_nodes=checkpoint.num_nodes,
        num_features=checkpoint.num_features,
        seed=0,
        graph=graph,
    )
    params.load_state_dict(checkpoint.tensors)
    return params


def check_compatible(checkpoint: Checkpoint, config: ModelConfig, num_nodes: int, num_features: int) -> None:
    """Config/checkpoint pairs must agree on everything that shapes the network"""
    if checkpoint.num_nodes != num_nodes or checkpoint.num_features != num_features:
        raise ConfigError(
            f"checkpoint is for {checkpoint.num_nodes} nodes x {checkpoint.num_features} "
            f"features, data has {num_nodes} x {num_features}"
        )
    saved = checkpoint.config.model_dump()
    current = config.model_dump()
    # init schedule does not change the network
    for key in ("init_epochs", "init_lr", "use_predefined_init", "use_curriculum"):
        saved.pop(key)
        current.pop(key)
    differing = sorted(k for k in saved if saved[k] != current[k])
    if differing:
        raise ConfigError(f"config and checkpoint disagree on {differing}")
