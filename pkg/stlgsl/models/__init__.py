"""
Models Package - Configuration documents and data value types
"""

from .config import (
    DataConfig,
    ModelConfig,
    NanPolicy,
    PadMode,
    RunConfig,
    SimilarityMetric,
    TrainConfig,
    load_run_config,
)
from .reports import EpochRecord, HorizonMetrics, MetricsReport, TrainState
from .series import DatasetSplits, Normalizer, TrafficSeries, WindowBatch, WindowStream

__all__ = [
    "DataConfig",
    "DatasetSplits",
    "EpochRecord",
    "HorizonMetrics",
    "MetricsReport",
    "ModelConfig",
    "NanPolicy",
    "Normalizer",
    "PadMode",
    "RunConfig",
    "SimilarityMetric",
    "TrafficSeries",
    "TrainConfig",
    "TrainState",
    "WindowBatch",
    "WindowStream",
    "load_run_config",
]
