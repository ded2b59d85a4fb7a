"""
Forecaster Service - the assembled ST-LGSL network
Latent graph generation feeding stacked gated-TCN / diffusion-conv blocks
with residual and skip connections and a dense multi-horizon head
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import structlog

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ConfigError, DimensionError
from ..models.config import ModelConfig, PadMode
from .graph_generator import (
    GeneratorParams,
    InitResult,
    create_generator,
    generate_latent,
    glorot_uniform,
    initialize_generator,
    normalize_graph,
)
from .layers import ConvKernel, DiffusionWeights, Transitions, diffusion_conv, gated_tcn, transition_matrices

logger = structlog.get_logger(__name__)


@dataclass
class GraphInputs:
    """Non-learnable graph inputs: A_pre and the generator's history matrix"""

    a_pre: Optional[np.ndarray] = None  # (M, M)
    generator_input: Optional[np.ndarray] = None  # (M, T_train), z-scored target
    transitions: Optional[Transitions] = field(default=None, init=False)

    def __post_init__(self):
        if self.a_pre is not None:
            self.transitions = transition_matrices(self.a_pre)

    @property
    def history_length(self) -> int:
        return 0 if self.generator_input is None else int(self.generator_input.shape[1])


@dataclass
class ModelParams:
    """All learnable tensors by name, plus the graph inputs they run on"""

    config: ModelConfig
    num_nodes: int
    num_features: int
    tensors: "OrderedDict[str, Tensor]"
    graph: GraphInputs
    generator: Optional[GeneratorParams] = None

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.tensors.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.tensors) ^ set(state)
        if missing:
            raise ConfigError(f"parameter sets differ: {sorted(missing)}")
        for name, tensor in self.tensors.items():
            if state[name].shape != tensor.shape:
                raise ConfigError(
                    f"parameter {name} has shape {state[name].shape}, "
                    f"model expects {tensor.shape}"
                )
            tensor.data = np.ascontiguousarray(state[name], dtype=tensor.data.dtype)

    @property
    def uses_generator(self) -> bool:
        return self.generator is not None

    @property
    def parameter_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def conv(self, block: int, branch: str) -> ConvKernel:
        prefix = f"blocks.{block}.{branch}"
        return ConvKernel(
            weight=self.tensors[f"{prefix}.weight"],
            bias=self.tensors[f"{prefix}.bias"],
            dilation=self.config.dilations[block],
        )

    def diffusion(self, block: int) -> DiffusionWeights:
        prefix = f"blocks.{block}.diffusion"
        powers = range(self.config.diffusion_steps + 1)

        def collect(term: str) -> List[Tensor]:
            names = [f"{prefix}.{term}.{k}" for k in powers]
            return [self.tensors[n] for n in names if n in self.tensors]

        return DiffusionWeights(
            forward=collect("forward"),
            backward=collect("backward"),
            latent=collect("latent"),
        )


def _glorot_conv(rng: np.random.Generator, c_in: int, c_out: int, k: int) -> np.ndarray:
    limit = np.sqrt(6.0 / ((c_in + c_out) * k))
    return rng.uniform(-limit, limit, size=(c_out, c_in, k))


def model_init(
    config: ModelConfig,
    num_nodes: int,
    num_features: int,
    seed: int,
    graph: Optional[GraphInputs] = None,
) -> ModelParams:
    """Glorot-uniform weights and zero biases drawn from one seeded generator"""
    graph = graph or GraphInputs()
    if config.receptive_field < config.input_length:
        raise ConfigError(
            f"receptive field {config.receptive_field} is shorter than "
            f"input_length {config.input_length}; widen kernel_size or dilations"
        )
    if not config.use_generator and graph.a_pre is None:
        raise ConfigError("use_generator=false needs a pre-defined adjacency")
    if config.use_generator and graph.generator_input is None:
        raise ConfigError("the latent graph generator needs its history input")
    if graph.a_pre is not None and graph.a_pre.shape != (num_nodes, num_nodes):
        raise DimensionError(
            f"adjacency {graph.a_pre.shape} does not match {num_nodes} nodes"
        )

    rng = np.random.default_rng(seed)
    res, skip, end = config.residual_channels, config.skip_channels, config.end_channels
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def dense(name: str, fan_in: int, fan_out: int) -> None:
        tensors[f"{name}.weight"] = ad.parameter(glorot_uniform(rng, fan_in, fan_out), name=f"{name}.weight")
        tensors[f"{name}.bias"] = ad.parameter(np.zeros(fan_out), name=f"{name}.bias")

    dense("input", num_features, res)
    three_terms = graph.a_pre is not None
    for block in range(config.blocks):
        prefix = f"blocks.{block}"
        for branch in ("filter", "gate"):
            name = f"{prefix}.{branch}"
            tensors[f"{name}.weight"] = ad.parameter(
                _glorot_conv(rng, res, res, config.kernel_size), name=f"{name}.weight"
            )
            tensors[f"{name}.bias"] = ad.parameter(np.zeros(res), name=f"{name}.bias")
        terms = ("forward", "backward", "latent") if three_terms else ("latent",)
        for term in terms:
            for power in range(config.diffusion_steps + 1):
                name = f"{prefix}.diffusion.{term}.{power}"
                tensors[name] = ad.parameter(glorot_uniform(rng, res, res), name=name)
        dense(f"{prefix}.residual", res, res)
        dense(f"{prefix}.skip", res, skip)
    dense("head.0", skip, end)
    dense("head.1", end, config.output_length)

    generator = None
    if config.use_generator:
        k = config.neighbors
        if k > num_nodes - 1:
            logger.warning("Clamping neighbor count to M-1", requested=k, nodes=num_nodes)
            k = num_nodes - 1
        generator = create_generator(
            input_width=graph.history_length,
            hidden=config.generator_hidden,
            embedding_dim=config.embedding_dim,
            k=k,
            rng=rng,
            metric=config.metric,
        )
        for tensor in generator.tensors():
            tensors[tensor.name] = tensor

    params = ModelParams(
        config=config,
        num_nodes=num_nodes,
        num_features=num_features,
        tensors=tensors,
        graph=graph,
        generator=generator,
    )
    logger.info(
        "Model initialized",
        parameters=params.parameter_count,
        blocks=config.blocks,
        receptive_field=config.receptive_field,
        generator=config.use_generator,
        diffusion_terms=3 if three_terms else 1,
    )
    return params


def pretrain_generator(params: ModelParams) -> InitResult:
    """Fit the generator to A_pre when the config and inputs allow it"""
    config = params.config
    if params.generator is None or not config.use_predefined_init:
        return InitResult()
    return initialize_generator(
        params.generator,
        params.graph.generator_input,
        params.graph.a_pre,
        epochs=config.init_epochs,
        lr=config.init_lr,
        symmetrize=config.symmetrize,
    )


def current_graph(params: ModelParams) -> Tensor:
    """Normalized adjacency used by the latent term of every block"""
    if params.generator is not None:
        raw = generate_latent(Tensor(params.graph.generator_input), params.generator)
        return normalize_graph(raw, params.config.symmetrize)
    return normalize_graph(Tensor(params.graph.a_pre), params.config.symmetrize)


def latent_adjacency(params: ModelParams) -> np.ndarray:
    """Current normalized adjacency as a plain array"""
    with ad.no_grad():
        return current_graph(params).data.astype(np.float64)


def forward(inputs: np.ndarray, params: ModelParams) -> Tensor:
    """(b, T_in, M, F) normalized windows -> (b, T_out, M) normalized forecasts"""
    config = params.config
    expected = (config.input_length, params.num_nodes, params.num_features)
    if inputs.ndim != 4 or tuple(inputs.shape[1:]) != expected:
        raise DimensionError(
            f"forward expects (b, {expected[0]}, {expected[1]}, {expected[2]}), "
            f"got {tuple(inputs.shape)}"
        )

    latent = current_graph(params)
    x = _project(Tensor(inputs), params, "input")  # (b, T, M, C_res)

    if config.pad == PadMode.VALID and config.receptive_field > config.input_length:
        missing = config.receptive_field - config.input_length
        x = ad.pad(x, [(0, 0), (missing, 0), (0, 0), (0, 0)])

    skip: Optional[Tensor] = None
    for block in range(config.blocks):
        hidden = gated_tcn(
            x,
            params.conv(block, "filter"),
            params.conv(block, "gate"),
            pad=config.pad,
            time_axis=1,
        )
        mixed = diffusion_conv(
            hidden,
            params.diffusion(block),
            config.diffusion_steps,
            transitions=params.graph.transitions,
            latent=latent,
        )
        steps = hidden.shape[1]
        residual = x
        if x.shape[1] != steps:
            residual = ad.getitem(x, (slice(None), slice(x.shape[1] - steps, None)))
        x = ad.add(_project(mixed, params, f"blocks.{block}.residual"), residual)

        last = ad.getitem(hidden, (slice(None), -1))  # (b, M, C_res)
        contribution = _project(last, params, f"blocks.{block}.skip")
        skip = contribution if skip is None else ad.add(skip, contribution)

    assert skip is not None
    out = ad.relu(skip)
    out = ad.relu(_project(out, params, "head.0"))
    out = _project(out, params, "head.1")  # (b, M, T_out)
    return ad.transpose(out, (0, 2, 1))


def _project(x: Tensor, params: ModelParams, name: str) -> Tensor:
    """Channels-last 1x1 projection x W + b"""
    out = ad.matmul(x, params[f"{name}.weight"])
    return ad.add(out, ad.broadcast_to(params[f"{name}.bias"], out.shape))
