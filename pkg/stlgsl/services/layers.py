"""
Spatio-Temporal Layers - gated dilated convolutions and diffusion convolution
Temporal feature extraction along the time axis and spatial aggregation over
random-walk transition matrices plus the latent graph
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import structlog

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import DataError, DimensionError
from ..models.config import PadMode
from .dataset_service import row_normalize

logger = structlog.get_logger(__name__)


@dataclass
class ConvKernel:
    """Taps (C_out x C_in x K), bias (C_out) and dilation of one temporal conv"""

    weight: Tensor
    bias: Tensor
    dilation: int = 1

    def __post_init__(self):
        if self.weight.ndim != 3:
            raise DimensionError(
                f"conv weight must be (C_out, C_in, K), got {self.weight.shape}"
            )
        if self.kernel_size < 1 or self.dilation < 1:
            raise DimensionError(
                f"kernel size and dilation must be >= 1, got K={self.kernel_size}, d={self.dilation}"
            )
        if self.bias.shape != (self.out_channels,):
            raise DimensionError(
                f"conv bias must be ({self.out_channels},), got {self.bias.shape}"
            )

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def span(self) -> int:
        """Steps of history a single output sees beyond the current one"""
        return (self.kernel_size - 1) * self.dilation


@dataclass
class DiffusionWeights:
    """Per-power projections for the forward, backward and latent terms

    `forward` and `backward` are empty for the latent-only form.
    """

    forward: List[Tensor] = field(default_factory=list)
    backward: List[Tensor] = field(default_factory=list)
    latent: List[Tensor] = field(default_factory=list)

    @property
    def uses_transitions(self) -> bool:
        return bool(self.forward)


@dataclass
class Transitions:
    """Forward and backward random-walk matrices of A_pre"""

    forward: np.ndarray
    backward: np.ndarray


def _time_slice(ndim: int, axis: int, start: int, length: int) -> Tuple[slice, ...]:
    index = [slice(None)] * ndim
    index[axis] = slice(start, start + length)
    return tuple(index)


def dilated_causal_conv(
    x: Tensor,
    kernel: ConvKernel,
    pad: PadMode = PadMode.CAUSAL,
    time_axis: int = -2,
) -> Tensor:
    """y_t = sum_i W_i x_(t - d*i) + bias over channels-last input

    Causal mode left-pads with zeros so the output keeps the input length;
    valid mode drops the first (K-1)*d positions instead.
    """
    x = ad.as_tensor(x)
    if x.shape[-1] != kernel.in_channels:
        raise DimensionError(
            f"conv expects {kernel.in_channels} input channels, got shape {x.shape}"
        )
    axis = time_axis % x.ndim
    if axis == x.ndim - 1:
        raise DimensionError("time axis cannot be the channel axis")

    steps = x.shape[axis]
    reach = kernel.span
    if pad == PadMode.CAUSAL:
        widths = [(0, 0)] * x.ndim
        widths[axis] = (reach, 0)
        padded = ad.pad(x, widths) if reach else x
        length = steps
    else:
        padded = x
        length = steps - reach
        if length < 1:
            raise DimensionError(
                f"valid conv needs more than {reach} steps, got {steps}"
            )

    out: Optional[Tensor] = None
    for tap in range(kernel.kernel_size):
        start = reach - kernel.dilation * tap
        shifted = ad.getitem(padded, _time_slice(x.ndim, axis, start, length))
        weight = ad.transpose(ad.getitem(kernel.weight, (slice(None), slice(None), tap)))
        term = ad.matmul(shifted, weight)
        out = term if out is None else ad.add(out, term)
    assert out is not None
    return ad.add(out, ad.broadcast_to(kernel.bias, out.shape))


def gated_tcn(
    x: Tensor,
    filter_kernel: ConvKernel,
    gate_kernel: ConvKernel,
    pad: PadMode = PadMode.CAUSAL,
    time_axis: int = -2,
) -> Tensor:
    """h = tanh(filter * x + b) Hadamard sigmoid(gate * x + c)"""
    if (
        filter_kernel.weight.shape != gate_kernel.weight.shape
        or filter_kernel.dilation != gate_kernel.dilation
    ):
        raise DimensionError(
            f"filter {filter_kernel.weight.shape} (d={filter_kernel.dilation}) and "
            f"gate {gate_kernel.weight.shape} (d={gate_kernel.dilation}) branches differ"
        )
    filtered = ad.tanh(dilated_causal_conv(x, filter_kernel, pad, time_axis))
    gate = ad.sigmoid(dilated_causal_conv(x, gate_kernel, pad, time_axis))
    return ad.hadamard(filtered, gate)


def transition_matrices(adjacency: np.ndarray) -> Transitions:
    """P_f = A / rowsum(A), P_b = A^T / rowsum(A^T); empty rows stay zero"""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DimensionError(f"adjacency must be square, got {adjacency.shape}")
    if (adjacency < 0).any():
        raise DataError("transition matrices need a non-negative adjacency")
    return Transitions(
        forward=row_normalize(adjacency),
        backward=row_normalize(adjacency.T),
    )


def _propagate(
    x: Tensor, graph: Tensor, weights: List[Tensor], steps: int
) -> Tensor:
    """sum_k graph^k x W_k with graph^k x built one step at a time"""
    if len(weights) != steps + 1:
        raise DimensionError(
            f"{len(weights)} diffusion weights for {steps} diffusion steps"
        )
    state = x
    total: Optional[Tensor] = None
    for power, weight in enumerate(weights):
        if power:
            state = ad.matmul(graph, state)
        term = ad.matmul(state, weight)
        total = term if total is None else ad.add(total, term)
    assert total is not None
    return total


def diffusion_conv(
    x: Tensor,
    weights: DiffusionWeights,
    steps: int,
    transitions: Optional[Transitions] = None,
    latent: Optional[Tensor] = None,
) -> Tensor:
    """Bidirectional diffusion plus the latent-graph term over (..., M, C) input

    Without transitions only the latent term is summed.
    """
    x = ad.as_tensor(x)
    if steps < 0:
        raise DimensionError(f"diffusion steps must be >= 0, got {steps}")
    num_nodes = x.shape[-2]

    terms: List[Tuple[Tensor, List[Tensor]]] = []
    if weights.uses_transitions:
        if transitions is None:
            raise DimensionError("forward/backward weights given without transition matrices")
        terms.append((Tensor(transitions.forward), weights.forward))
        terms.append((Tensor(transitions.backward), weights.backward))
    if weights.latent:
        if latent is None:
            raise DimensionError("latent weights given without a latent graph")
        terms.append((ad.as_tensor(latent), weights.latent))
    if not terms:
        raise DimensionError("diffusion convolution has no graph terms")

    out: Optional[Tensor] = None
    for graph, term_weights in terms:
        if graph.shape != (num_nodes, num_nodes):
            raise DimensionError(
                f"graph of shape {graph.shape} does not match {num_nodes} nodes"
            )
        term = _propagate(x, graph, term_weights, steps)
        out = term if out is None else ad.add(out, term)
    assert out is not None
    return out
