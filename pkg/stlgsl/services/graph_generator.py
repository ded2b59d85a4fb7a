"""
Latent Graph Generator - MLP-kNN over full node histories
Embeds each node's training history, links it to its k most similar peers
and normalizes the result into a symmetric adjacency
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ConfigError, DimensionError, NumericError
from ..models.config import SimilarityMetric
from .optimizer import AdamOptimizer

logger = structlog.get_logger(__name__)

# rows with a smaller embedding norm get zero similarity
ZERO_NORM = 1e-12

# relative loss increase tolerated before an init step is undone
INIT_LOSS_SLACK = 1e-3


@dataclass
class GeneratorParams:
    """MLP weights and biases plus the kNN settings"""

    weights: List[Tensor]
    biases: List[Tensor]
    k: int
    metric: SimilarityMetric = SimilarityMetric.COSINE

    def tensors(self) -> List[Tensor]:
        return [*self.weights, *self.biases]

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.weights[-1].shape[1]


@dataclass
class LatentGraph:
    """Raw kNN graph A' and its normalized form"""

    raw: Tensor
    normalized: Tensor


@dataclass
class InitResult:
    """Outcome of pre-training the generator toward A_pre"""

    losses: List[float] = field(default_factory=list)
    rejected_steps: int = 0

    @property
    def reduction(self) -> float:
        if not self.losses or self.losses[0] == 0:
            return 0.0
        return 1.0 - self.losses[-1] / self.losses[0]


@dataclass
class _InitCheckpoint:
    """Parameters and Adam state behind the last accepted init loss"""

    loss: float
    data: List[np.ndarray]
    first: Dict[str, np.ndarray]
    second: Dict[str, np.ndarray]
    steps: int

    @classmethod
    def take(cls, loss: float, tensors: List[Tensor], optimizer: AdamOptimizer) -> "_InitCheckpoint":
        return cls(
            loss=loss,
            data=[t.data.copy() for t in tensors],
            first=dict(optimizer.first),
            second=dict(optimizer.second),
            steps=optimizer.steps,
        )

    def restore(self, tensors: List[Tensor], optimizer: AdamOptimizer) -> None:
        for tensor, data in zip(tensors, self.data):
            tensor.data = data.copy()
        optimizer.first = dict(self.first)
        optimizer.second = dict(self.second)
        optimizer.steps = self.steps


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def create_generator(
    input_width: int,
    hidden: Sequence[int],
    embedding_dim: int,
    k: int,
    rng: np.random.Generator,
    metric: SimilarityMetric = SimilarityMetric.COSINE,
) -> GeneratorParams:
    """Glorot-initialized MLP input_width -> hidden... -> embedding_dim"""
    if embedding_dim >= input_width:
        raise ConfigError(
            f"embedding width {embedding_dim} must be smaller than the "
            f"generator history length {input_width}"
        )
    widths = [input_width, *hidden, embedding_dim]
    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        weights.append(
            ad.parameter(glorot_uniform(rng, fan_in, fan_out), name=f"generator.mlp.{layer}.weight")
        )
        biases.append(ad.parameter(np.zeros(fan_out), name=f"generator.mlp.{layer}.bias"))
    return GeneratorParams(weights=weights, biases=biases, k=k, metric=metric)


def mlp_forward(x_full: Tensor, params: GeneratorParams) -> Tensor:
    """Node embeddings E (M x T'); ReLU between layers, none on the output"""
    x_full = ad.as_tensor(x_full)
    if x_full.ndim != 2 or x_full.shape[1] != params.input_width:
        raise DimensionError(
            f"generator expects (M, {params.input_width}) input, got {x_full.shape}"
        )
    hidden = x_full
    last = len(params.weights) - 1
    for layer, (weight, bias) in enumerate(zip(params.weights, params.biases)):
        hidden = ad.matmul(hidden, weight)
        hidden = ad.add(hidden, ad.broadcast_to(bias, hidden.shape))
        if layer < last:
            hidden = ad.relu(hidden)
    return hidden


def similarity_matrix(
    embeddings: Tensor, metric: SimilarityMetric = SimilarityMetric.COSINE
) -> Tensor:
    """Pairwise cosine similarity; zero-norm rows give zero rows and columns"""
    if metric != SimilarityMetric.COSINE:
        raise ConfigError(f"unsupported similarity metric '{metric}'")
    embeddings = ad.as_tensor(embeddings)
    squared_norms = ad.sum(ad.hadamard(embeddings, embeddings), axis=1, keepdims=True)
    inv_norms = ad.safe_rsqrt(squared_norms, floor=ZERO_NORM ** 2)
    unit = ad.hadamard(embeddings, ad.broadcast_to(inv_norms, embeddings.shape))
    return ad.matmul(unit, ad.transpose(unit))


def topk_mask(similarity: np.ndarray, k: int) -> np.ndarray:
    """0/1 mask of each row's k largest off-diagonal entries

    Ties go to the lower column index.
    """
    similarity = np.asarray(similarity, dtype=np.float64)
    num_nodes = similarity.shape[0]
    if similarity.shape != (num_nodes, num_nodes):
        raise DimensionError(f"similarity must be square, got {similarity.shape}")
    if not 1 <= k <= num_nodes - 1:
        raise ConfigError(f"k must lie in 1..{num_nodes - 1}, got {k}")

    scores = -similarity
    np.fill_diagonal(scores, np.inf)
    order = np.argsort(scores, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(similarity)
    np.put_along_axis(mask, order, 1.0, axis=1)
    return mask


def generate_latent(x_full: Tensor, params: GeneratorParams) -> Tensor:
    """A' = T_mask (constant) Hadamard S; gradients flow through S only"""
    embeddings = mlp_forward(x_full, params)
    if not np.isfinite(embeddings.data).all():
        raise NumericError(
            "graph generator produced non-finite node embeddings; "
            "lower the learning rate or check the generator input"
        )
    similarity = similarity_matrix(embeddings, params.metric)
    mask = topk_mask(similarity.data, params.k)
    return ad.hadamard(Tensor(mask), similarity)


def normalize_graph(raw: Tensor, symmetrize: bool = True) -> Tensor:
    """Sym then Norm: D^-1/2 * (ReLU(A') + ReLU(A')^T) / 2 * D^-1/2

    With `symmetrize` off, ReLU(A') is row-normalized by its degrees instead.
    Zero-degree rows stay zero.
    """
    raw = ad.as_tensor(raw)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise DimensionError(f"adjacency must be square, got {raw.shape}")

    rectified = ad.relu(raw)
    if not symmetrize:
        degrees = ad.sum(rectified, axis=1, keepdims=True)
        inverse = ad.safe_reciprocal(degrees)
        return ad.hadamard(rectified, ad.broadcast_to(inverse, rectified.shape))

    sym = ad.scale(ad.add(rectified, ad.transpose(rectified)), 0.5)
    degrees = ad.sum(sym, axis=1, keepdims=True)
    inv_sqrt = ad.safe_rsqrt(degrees)
    left = ad.broadcast_to(inv_sqrt, sym.shape)
    right = ad.broadcast_to(ad.transpose(inv_sqrt), sym.shape)
    return ad.hadamard(ad.hadamard(left, sym), right)


def latent_graph(x_full: Tensor, params: GeneratorParams, symmetrize: bool = True) -> LatentGraph:
    raw = generate_latent(x_full, params)
    return LatentGraph(raw=raw, normalized=normalize_graph(raw, symmetrize))


def _init_loss(inputs: Tensor, params: GeneratorParams, target: Tensor, symmetrize: bool) -> Tensor:
    generated = normalize_graph(generate_latent(inputs, params), symmetrize)
    diff = ad.sub(generated, target)
    return ad.mean(ad.hadamard(diff, diff))


def initialize_generator(
    params: GeneratorParams,
    x_full: np.ndarray,
    a_pre: Optional[np.ndarray],
    epochs: int,
    lr: float = 1e-3,
    symmetrize: bool = True,
) -> InitResult:
    """Pre-train theta_G so the normalized latent graph reproduces normalized A_pre

    Loss is the mean squared difference of the two normalized graphs,
    minimized with Adam. Parameters are updated in place.

    A step that raises the loss by more than INIT_LOSS_SLACK is undone and
    retried at half the rate; recorded losses never rise.
    """
    result = InitResult()
    if a_pre is None or epochs == 0:
        logger.info("Skipping generator initialization", epochs=epochs, has_graph=a_pre is not None)
        return result

    inputs = Tensor(x_full)
    with ad.no_grad():
        target = normalize_graph(Tensor(a_pre), symmetrize)
    tensors = params.tensors()
    optimizer = AdamOptimizer({t.name or str(i): t for i, t in enumerate(tensors)}, lr=lr)

    def evaluate(epoch: int) -> Tensor:
        ad.current_tape().reset()
        optimizer.zero_grad()
        try:
            loss = _init_loss(inputs, params, target, symmetrize)
        except NumericError as exc:
            raise NumericError(
                f"generator initialization diverged at epoch {epoch} ({exc}); "
                f"try a smaller init_lr than {optimizer.lr}"
            ) from exc
        if not np.isfinite(loss.item()):
            raise NumericError(
                f"generator initialization diverged at epoch {epoch} (loss {loss.item()}); "
                f"try a smaller init_lr than {optimizer.lr}"
            )
        return loss

    accepted: Optional[_InitCheckpoint] = None
    for epoch in range(epochs + 1):
        loss = evaluate(epoch)
        if accepted is not None and loss.item() > accepted.loss * (1.0 + INIT_LOSS_SLACK):
            accepted.restore(tensors, optimizer)
            optimizer.lr *= 0.5
            result.rejected_steps += 1
            logger.debug("Generator init step undone", epoch=epoch, loss=loss.item(), lr=optimizer.lr)
            loss = evaluate(epoch)

        value = loss.item()
        result.losses.append(value)
        if epoch == epochs:
            break
        accepted = _InitCheckpoint.take(value, tensors, optimizer)
        ad.backward(loss)
        optimizer.step()
        if epoch % 100 == 0:
            logger.debug("Generator init", epoch=epoch, loss=value)

    ad.current_tape().reset()
    logger.info(
        "✅ Generator initialized",
        epochs=epochs,
        first_loss=result.losses[0],
        final_loss=result.losses[-1],
        rejected_steps=result.rejected_steps,
    )
    return result


def support_recall(learned: np.ndarray, reference: np.ndarray) -> float:
    """Fraction of reference off-diagonal edges present in the learned graph"""
    off = ~np.eye(reference.shape[0], dtype=bool)
    truth = (reference > 0) & off
    if not truth.any():
        return 1.0
    return float(((learned > 0) & truth).sum() / truth.sum())


def support_precision(learned: np.ndarray, reference: np.ndarray) -> float:
    """Fraction of learned off-diagonal edges present in the reference graph"""
    off = ~np.eye(reference.shape[0], dtype=bool)
    found = (learned > 0) & off
    if not found.any():
        return 1.0
    return float((found & (reference > 0)).sum() / found.sum())
