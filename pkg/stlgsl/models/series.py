"""
Traffic data value types
Series, windows, normalizer and the split streams fed to training
"""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np

from ..errors import DataError, DimensionError


@dataclass
class TrafficSeries:
    """Readings of M sensors with F features over T five-minute steps"""

    values: np.ndarray  # (T, M, F), time outermost
    interval_minutes: int = 5

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise DimensionError(
                f"series values must be (T, M, F), got shape {self.values.shape}"
            )

    @property
    def num_steps(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_nodes(self) -> int:
        return int(self.values.shape[1])

    @property
    def num_features(self) -> int:
        return int(self.values.shape[2])

    def target(self, feature: int = 0) -> np.ndarray:
        """(T, M) slice of one feature channel"""
        if not 0 <= feature < self.num_features:
            raise DataError(
                f"target feature {feature} outside 0..{self.num_features - 1}"
            )
        return self.values[:, :, feature]


@dataclass
class Normalizer:
    """Per-node, per-feature z-score fitted on the training split"""

    mean: np.ndarray  # (M, F)
    std: np.ndarray  # (M, F)

    STD_FLOOR = 1e-8

    @classmethod
    def fit(cls, values: np.ndarray) -> "Normalizer":
        data = values.astype(np.float64)
        return cls(
            mean=data.mean(axis=0),
            std=np.maximum(data.std(axis=0), cls.STD_FLOOR),
        )

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean

    def transform_target(self, values: np.ndarray, feature: int) -> np.ndarray:
        """Z-score a (..., M) array of one feature channel"""
        return (values - self.mean[:, feature]) / self.std[:, feature]

    def inverse_target(self, values: np.ndarray, feature: int) -> np.ndarray:
        return values * self.std[:, feature] + self.mean[:, feature]


@dataclass(frozen=True)
class WindowBatch:
    """Normalized inputs (b, T_in, M, F) with raw targets (b, T_out, M)"""

    inputs: np.ndarray
    targets: np.ndarray
    starts: np.ndarray

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])


@dataclass
class WindowStream:
    """Windows of one chronological split, served in batches"""

    name: str
    normalized: np.ndarray  # (T_split, M, F)
    raw_target: np.ndarray  # (T_split, M)
    offset: int  # index of the split's first step in the full series
    input_length: int
    output_length: int
    batch_size: int
    shuffle: bool = False
    seed: int = 0

    @property
    def num_windows(self) -> int:
        span = self.input_length + self.output_length
        return max(0, int(self.normalized.shape[0]) - span + 1)

    def __len__(self) -> int:
        return self.num_windows

    @property
    def is_empty(self) -> bool:
        return self.num_windows == 0

    def window_starts(self, epoch: int = 0) -> np.ndarray:
        """Local start indices, shuffled per epoch when enabled"""
        starts = np.arange(self.num_windows)
        if self.shuffle:
            rng = np.random.default_rng([self.seed, epoch])
            rng.shuffle(starts)
        return starts

    def take(self, starts: np.ndarray) -> WindowBatch:
        starts = np.asarray(starts, dtype=np.int64)
        steps_in = starts[:, None] + np.arange(self.input_length)[None, :]
        steps_out = (
            starts[:, None]
            + self.input_length
            + np.arange(self.output_length)[None, :]
        )
        return WindowBatch(
            inputs=self.normalized[steps_in],
            targets=self.raw_target[steps_out],
            starts=starts + self.offset,
        )

    def batches(self, epoch: int = 0) -> Iterator[WindowBatch]:
        starts = self.window_starts(epoch)
        for i in range(0, len(starts), self.batch_size):
            yield self.take(starts[i:i + self.batch_size])


@dataclass
class DatasetSplits:
    """Chronological train/val/test streams and the fitted normalizer"""

    train: WindowStream
    val: WindowStream
    test: WindowStream
    normalizer: Normalizer
    target_feature: int
    boundaries: List[int] = field(default_factory=list)
    generator_input: Optional[np.ndarray] = None  # (M, T_train) z-scored target
