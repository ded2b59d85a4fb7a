"""
Dataset Service - traffic series and graph IO
Binary STLG codec, adjacency CSVs, Gaussian-kernel graphs, windowing and
planted-graph synthesis
"""

import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from ..errors import ConfigError, DataError
from ..models.config import DataConfig, NanPolicy
from ..models.series import DatasetSplits, Normalizer, TrafficSeries, WindowStream

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

STLG_MAGIC = b"STLG"
STLG_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")  # magic, version, M, F, T


# STLG binary format


def save_dataset(series: TrafficSeries, path: PathLike) -> None:
    """Write a series as STLG: header then little-endian float32 [t][node][feature]"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(
        STLG_MAGIC,
        STLG_VERSION,
        series.num_nodes,
        series.num_features,
        series.num_steps,
    )
    payload = series.values.astype("<f4", copy=False).tobytes(order="C")
    path.write_bytes(header + payload)
    logger.debug("Saved dataset", path=str(path), shape=series.values.shape)


def load_dataset(
    path: PathLike, nan_policy: NanPolicy = NanPolicy.FFILL
) -> TrafficSeries:
    """Read an STLG file and fill missing readings"""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc

    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: file too short for an STLG header")
    magic, version, num_nodes, num_features, num_steps = _HEADER.unpack_from(raw)
    if magic != STLG_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {STLG_MAGIC!r}")
    if version != STLG_VERSION:
        raise DataError(f"{path}: unsupported STLG version {version}")
    if num_steps == 0 or num_nodes == 0 or num_features == 0:
        raise DataError(f"{path}: empty dataset (T={num_steps}, M={num_nodes}, F={num_features})")

    expected = num_steps * num_nodes * num_features * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload has {len(payload)} bytes, header implies {expected}"
        )

    values = np.frombuffer(payload, dtype="<f4").reshape(
        num_steps, num_nodes, num_features
    )
    values = fill_missing(values, nan_policy)
    logger.info(
        "✅ Dataset loaded",
        path=str(path),
        nodes=num_nodes,
        features=num_features,
        steps=num_steps,
    )
    return TrafficSeries(values=values)


def fill_missing(values: np.ndarray, policy: NanPolicy) -> np.ndarray:
    """Apply the NaN policy; a sensor with no finite reading is fatal"""
    finite = np.isfinite(values)
    if finite.all():
        return values
    dead = np.where(~finite.any(axis=(0, 2)))[0]
    if dead.size:
        raise DataError(f"nodes {dead.tolist()} have no finite readings")

    num_steps, num_nodes, num_features = values.shape
    frame = pd.DataFrame(values.reshape(num_steps, -1).astype(np.float64))
    frame = frame.where(np.isfinite(frame))
    if policy == NanPolicy.FFILL:
        frame = frame.ffill()
    frame = frame.fillna(0.0)
    logger.warning(
        "Filled missing readings", cells=int((~finite).sum()), policy=policy.value
    )
    return frame.to_numpy().reshape(num_steps, num_nodes, num_features)


def convert_csv(
    source: PathLike, target: PathLike, index_column: bool = False
) -> TrafficSeries:
    """Plain CSV (rows = time steps, columns = nodes) to STLG"""
    try:
        frame = pd.read_csv(source, index_col=0 if index_column else None)
    except (OSError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read CSV {source}: {exc}") from exc
    try:
        values = frame.apply(pd.to_numeric, errors="raise").to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise DataError(f"{source}: non-numeric readings ({exc})") from exc
    if values.size == 0:
        raise DataError(f"{source}: no readings")

    series = TrafficSeries(values=values[:, :, None])
    save_dataset(series, target)
    logger.info(
        "✅ Converted CSV",
        source=str(source),
        target=str(target),
        nodes=series.num_nodes,
        steps=series.num_steps,
    )
    return series


# Graph CSVs


def load_matrix_csv(path: PathLike, num_nodes: int, fill: float = 0.0) -> np.ndarray:
    """Dense M x M matrix from `src,dst,value` rows; unlisted pairs get `fill`"""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read graph CSV {path}: {exc}") from exc
    if list(frame.columns[:3]) != ["src", "dst", "value"]:
        raise DataError(f"{path}: header must be 'src,dst,value'")

    src = frame["src"].to_numpy(dtype=np.int64)
    dst = frame["dst"].to_numpy(dtype=np.int64)
    if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes):
        raise DataError(f"{path}: node ids must lie in 0..{num_nodes - 1}")

    matrix = np.full((num_nodes, num_nodes), fill, dtype=np.float64)
    matrix[src, dst] = frame["value"].to_numpy(dtype=np.float64)
    return matrix


def save_matrix_csv(matrix: np.ndarray, path: PathLike) -> None:
    """Write the nonzero entries of a matrix as `src,dst,value` rows"""
    src, dst = np.nonzero(matrix)
    frame = pd.DataFrame({"src": src, "dst": dst, "value": matrix[src, dst]})
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def save_dense_csv(matrix: np.ndarray, path: PathLike, decimals: int = 6) -> None:
    """Write a full M x M matrix, fixed decimals, no header"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(matrix).to_csv(
        path, header=False, index=False, float_format=f"%.{decimals}f"
    )


def load_dense_csv(path: PathLike) -> np.ndarray:
    try:
        return pd.read_csv(path, header=None).to_numpy(dtype=np.float64)
    except (OSError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read matrix CSV {path}: {exc}") from exc


def default_sigma(distances: np.ndarray) -> float:
    """Standard deviation of the finite off-diagonal distances"""
    off_diagonal = ~np.eye(distances.shape[0], dtype=bool)
    finite = distances[off_diagonal & np.isfinite(distances)]
    sigma = float(finite.std()) if finite.size else 0.0
    return sigma if sigma > 0 else 1.0


def build_predefined_adjacency(
    distances: np.ndarray, sigma: float, kappa: Optional[float] = None
) -> np.ndarray:
    """Thresholded Gaussian kernel: exp(-d^2 / sigma^2) where d <= kappa, else 0"""
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if kappa is not None and kappa < 0:
        raise ConfigError(f"kappa must be non-negative, got {kappa}")
    distances = np.asarray(distances, dtype=np.float64)
    if (distances < 0).any():
        raise DataError("distance table contains negative entries")

    limit = np.inf if kappa is None else kappa
    within = np.isfinite(distances) & (distances <= limit)
    safe = np.where(within, distances, 0.0)
    adjacency = np.where(within, np.exp(-(safe ** 2) / sigma ** 2), 0.0)
    np.fill_diagonal(adjacency, 1.0)
    return adjacency


def load_predefined_graph(config: DataConfig, num_nodes: int) -> Optional[np.ndarray]:
    """A_pre from the run config, or None when no geography is given"""
    if config.adjacency:
        adjacency = load_matrix_csv(config.adjacency, num_nodes, fill=0.0)
        if (adjacency < 0).any():
            raise DataError(f"{config.adjacency}: adjacency has negative weights")
        return adjacency
    if config.distances:
        distances = load_matrix_csv(config.distances, num_nodes, fill=np.inf)
        np.fill_diagonal(distances, 0.0)
        sigma = config.sigma or default_sigma(distances)
        logger.info("Building Gaussian-kernel adjacency", sigma=sigma, kappa=config.kappa)
        return build_predefined_adjacency(distances, sigma, config.kappa)
    return None


# Split and window


def split_and_window(
    series: TrafficSeries,
    ratios: Tuple[float, float, float] = (0.7, 0.2, 0.1),
    input_length: int = 12,
    output_length: int = 12,
    batch_size: int = 64,
    target_feature: int = 0,
    seed: int = 0,
) -> DatasetSplits:
    """Chronological split, z-score fitted on train, contiguous windows"""
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ConfigError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    if input_length < 1 or output_length < 1:
        raise ConfigError("input and output lengths must be >= 1")

    total = series.num_steps
    span = input_length + output_length
    if total < span:
        raise DataError(f"series has {total} steps, one window needs {span}")

    n_train = int(round(total * ratios[0]))
    n_val = int(round(total * ratios[1]))
    boundaries = [0, n_train, n_train + n_val, total]

    raw_target = series.target(target_feature).astype(np.float64)
    normalizer = Normalizer.fit(series.values[:n_train])
    normalized = normalizer.transform(series.values.astype(np.float64))

    def stream(name: str, index: int, shuffle: bool) -> WindowStream:
        lo, hi = boundaries[index], boundaries[index + 1]
        return WindowStream(
            name=name,
            normalized=normalized[lo:hi],
            raw_target=raw_target[lo:hi],
            offset=lo,
            input_length=input_length,
            output_length=output_length,
            batch_size=batch_size,
            shuffle=shuffle,
            seed=seed,
        )

    train = stream("train", 0, shuffle=True)
    val = stream("val", 1, shuffle=False)
    test = stream("test", 2, shuffle=False)

    if train.is_empty:
        raise DataError(
            f"training split of {n_train} steps cannot hold one {span}-step window"
        )
    for split in (val, test):
        if split.is_empty:
            logger.warning(
                "Split holds no full window", split=split.name, steps=len(split.raw_target)
            )

    return DatasetSplits(
        train=train,
        val=val,
        test=test,
        normalizer=normalizer,
        target_feature=target_feature,
        boundaries=boundaries,
        generator_input=np.ascontiguousarray(normalized[:n_train, :, target_feature].T),
    )


# Planted-graph synthesis


def plant_graph(num_nodes: int, k_true: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric 0/1 graph, zero diagonal, every degree >= k_true"""
    graph = np.zeros((num_nodes, num_nodes), dtype=np.float64)
    for node in range(num_nodes):
        others = np.delete(np.arange(num_nodes), node)
        graph[node, rng.choice(others, size=k_true, replace=False)] = 1.0
    graph = np.maximum(graph, graph.T)
    np.fill_diagonal(graph, 0.0)
    return graph


def hide_edges(graph: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Copy of a symmetric graph with round(fraction * edges) undirected edges removed"""
    if not 0.0 <= fraction < 1.0:
        raise ConfigError(f"hidden edge fraction must lie in [0, 1), got {fraction}")
    rows, cols = np.nonzero(np.triu(graph, k=1))
    hidden = rng.choice(rows.size, size=int(round(fraction * rows.size)), replace=False)
    observed = graph.copy()
    observed[rows[hidden], cols[hidden]] = 0.0
    observed[cols[hidden], rows[hidden]] = 0.0
    return observed


def row_normalize(matrix: np.ndarray) -> np.ndarray:
    sums = matrix.sum(axis=1, keepdims=True)
    return np.divide(matrix, sums, out=np.zeros_like(matrix), where=sums > 0)


def simulate_planted_dynamics(
    transition: np.ndarray,
    seasonal: np.ndarray,
    noise: np.ndarray,
    x0: np.ndarray,
    graph_coef: float = 0.6,
    seasonal_coef: float = 0.3,
) -> np.ndarray:
    """x[t+1] = graph_coef * P x[t] + seasonal_coef * s[t] + noise[t]"""
    steps = seasonal.shape[0]
    states = np.empty((steps, transition.shape[0]), dtype=np.float64)
    states[0] = x0
    for t in range(steps - 1):
        states[t + 1] = (
            graph_coef * transition @ states[t]
            + seasonal_coef * seasonal[t]
            + noise[t]
        )
    return states


def generate_synthetic(
    num_nodes: int,
    num_steps: int,
    k_true: int = 3,
    seed: int = 0,
    graph_coef: float = 0.6,
    seasonal_coef: float = 0.3,
    noise_std: float = 0.01,
    period: int = 288,
) -> Tuple[TrafficSeries, np.ndarray]:
    """Series driven by a planted graph, plus that graph"""
    if num_nodes < 2:
        raise ConfigError("a planted graph needs at least 2 nodes")
    if num_steps < 200:
        raise ConfigError(f"synthetic series needs >= 200 steps, got {num_steps}")
    if not 1 <= k_true <= num_nodes - 1:
        raise ConfigError(f"k_true must lie in 1..{num_nodes - 1}, got {k_true}")

    rng = np.random.default_rng(seed)
    graph = plant_graph(num_nodes, k_true, rng)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=num_nodes)
    t = np.arange(num_steps)[:, None]
    seasonal = np.sin(2.0 * np.pi * t / period + phases[None, :])
    noise = rng.normal(0.0, noise_std, size=(num_steps, num_nodes))

    states = simulate_planted_dynamics(
        row_normalize(graph),
        seasonal,
        noise,
        x0=np.zeros(num_nodes),
        graph_coef=graph_coef,
        seasonal_coef=seasonal_coef,
    )
    logger.info(
        "Generated synthetic dataset",
        nodes=num_nodes,
        steps=num_steps,
        edges=int(graph.sum() // 2),
        seed=seed,
    )
    return TrafficSeries(values=states[:, :, None]), graph
