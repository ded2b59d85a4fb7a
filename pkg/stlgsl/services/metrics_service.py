"""
Metrics Service - horizon-wise errors in raw units
"""

from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import structlog

from ..errors import DataError, DimensionError
from ..models.reports import HorizonMetrics, MetricsReport

logger = structlog.get_logger(__name__)

# targets closer to zero are left out of MAPE
MAPE_FLOOR = 1e-8


def valid_mask(targets: np.ndarray, null_value: Optional[float] = None) -> np.ndarray:
    """True where a target counts; `null_value` readings are sentinels"""
    mask = np.isfinite(targets)
    if null_value is not None:
        mask &= ~np.isclose(targets, null_value)
    return mask


def _errors(pred: np.ndarray, target: np.ndarray, mask: np.ndarray, label: str) -> HorizonMetrics:
    if not mask.any():
        raise DataError(f"every target at horizon {label} is masked")
    diff = (pred - target)[mask]
    mae = float(np.mean(np.abs(diff)))
    rmse = float(np.sqrt(np.mean(diff * diff)))

    mape_mask = mask & (np.abs(target) >= MAPE_FLOOR)
    if mape_mask.any():
        mape = float(np.mean(np.abs((pred - target)[mape_mask] / target[mape_mask])) * 100.0)
    else:
        mape = 0.0
    return HorizonMetrics(horizon=label, mae=mae, rmse=rmse, mape_percent=mape)


def compute_metrics(
    pred: np.ndarray,
    target: np.ndarray,
    horizons: Sequence[int] = (3, 6, 12),
    null_value: Optional[float] = None,
) -> MetricsReport:
    """MAE, RMSE and MAPE at single horizons (1-based) plus over all steps

    Inputs are (n, T_out, M) or (T_out, M); a 1-d pair is one horizon.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"predictions {pred.shape} and targets {target.shape} differ")
    if pred.ndim == 1:
        pred, target = pred[None, None, :], target[None, None, :]
    elif pred.ndim == 2:
        pred, target = pred[None], target[None]

    output_length = pred.shape[1]
    too_far = [h for h in horizons if not 1 <= h <= output_length]
    if too_far:
        raise DimensionError(f"horizons {too_far} outside 1..{output_length}")

    mask = valid_mask(target, null_value)
    rows: List[HorizonMetrics] = [
        _errors(pred[:, h - 1], target[:, h - 1], mask[:, h - 1], str(h)) for h in horizons
    ]
    overall = _errors(pred, target, mask, "all")
    return MetricsReport(horizons=rows, overall=overall)


def report_frame(report: MetricsReport) -> pd.DataFrame:
    return pd.DataFrame(
        [row.model_dump() for row in report.rows()],
        columns=["horizon", "mae", "rmse", "mape_percent"],
    )


def save_report(report: MetricsReport, path: Union[str, Path]) -> None:
    """CSV with columns horizon,mae,rmse,mape_percent"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report_frame(report).to_csv(path, index=False, float_format="%.6f")
    logger.info("Metrics report written", path=str(path), mae=report.overall.mae)
