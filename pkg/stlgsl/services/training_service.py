"""
Training Service - curriculum learning loop
Adam updates on a widening horizon slice, per-epoch validation, learning-rate
decay, early stopping and graph snapshots
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import DataError, DimensionError, NumericError
from ..models.config import TrainConfig
from ..models.reports import EpochRecord, MetricsReport, TrainState
from ..models.series import DatasetSplits, Normalizer, WindowBatch, WindowStream
from .dataset_service import save_dense_csv
from .forecaster import ModelParams, forward, latent_adjacency
from .metrics_service import compute_metrics, valid_mask
from .optimizer import AdamOptimizer

logger = structlog.get_logger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "val_mae", "val_rmse", "val_mape", "lr", "r"]


def mae_loss(pred: Tensor, target: Union[Tensor, np.ndarray], mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean absolute error over the unmasked elements"""
    pred = ad.as_tensor(pred)
    target = ad.as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"loss: prediction {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise DataError("loss over an empty slice")

    errors = ad.abs(ad.sub(pred, target))
    if mask is None:
        return ad.mean(errors)
    mask = np.asarray(mask, dtype=np.float64)
    count = float(mask.sum())
    if count == 0:
        raise DataError("every target in the loss slice is masked")
    return ad.scale(ad.sum(ad.hadamard(errors, Tensor(mask))), 1.0 / count)


def curriculum_level(it: int, r: int, step_size: int, output_length: int) -> int:
    """Task level after the guard of iteration `it`: bump every `step_size` iterations"""
    if it % step_size == 0 and r < output_length:
        return r + 1
    return r


def curriculum_step(
    state: TrainState,
    batch: WindowBatch,
    params: ModelParams,
    optimizer: AdamOptimizer,
    normalizer: Normalizer,
    target_feature: int,
    config: TrainConfig,
    null_value: Optional[float] = None,
) -> float:
    """One iteration: update r, fit the first r horizons, advance `it`"""
    output_length = params.config.output_length
    if params.config.use_curriculum:
        state.r = curriculum_level(state.it, state.r, config.step_size, output_length)
    else:
        state.r = output_length

    ad.current_tape().reset()
    optimizer.zero_grad()
    pred = forward(batch.inputs, params)
    horizon = (slice(None), slice(0, state.r))
    targets = normalizer.transform_target(batch.targets, target_feature)[horizon]
    mask = None
    if config.null_mask:
        mask = valid_mask(batch.targets, null_value)[horizon]
    loss = mae_loss(ad.getitem(pred, horizon), targets, mask)

    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(
            f"loss became {value} at iteration {state.it} (r={state.r}, lr={optimizer.lr:.3g}); "
            "lower the learning rate or check the inputs for extreme values"
        )
    ad.backward(loss)
    optimizer.step()
    state.it += 1
    return value


def predict_stream(
    params: ModelParams,
    stream: WindowStream,
    normalizer: Normalizer,
    target_feature: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Raw-unit forecasts and targets over every window of a split, in order"""
    preds: List[np.ndarray] = []
    targets: List[np.ndarray] = []
    with ad.no_grad():
        for batch in stream.batches():
            out = forward(batch.inputs, params).data.astype(np.float64)
            preds.append(normalizer.inverse_target(out, target_feature))
            targets.append(batch.targets)
    if not preds:
        shape = (0, params.config.output_length, params.num_nodes)
        return np.zeros(shape), np.zeros(shape)
    return np.concatenate(preds), np.concatenate(targets)


def historical_average_baseline(stream: WindowStream) -> Tuple[np.ndarray, np.ndarray]:
    """Every horizon predicts the per-node mean of the raw input window"""
    starts = np.arange(stream.num_windows)
    steps_in = starts[:, None] + np.arange(stream.input_length)[None, :]
    steps_out = steps_in[:, -1:] + 1 + np.arange(stream.output_length)[None, :]
    window_means = stream.raw_target[steps_in].mean(axis=1)  # (n, M)
    pred = np.repeat(window_means[:, None, :], stream.output_length, axis=1)
    return pred, stream.raw_target[steps_out]


@dataclass
class TrainResult:
    """Best parameters (already loaded into the model) and the epoch history"""

    state: TrainState
    best_report: Optional[MetricsReport] = None

    @property
    def history(self) -> List[EpochRecord]:
        return self.state.history


class Trainer:
    """Runs the curriculum loop over one model and one set of splits"""

    def __init__(
        self,
        params: ModelParams,
        splits: DatasetSplits,
        config: TrainConfig,
        output_dir: Optional[Union[str, Path]] = None,
        null_value: Optional[float] = None,
    ):
        self.params = params
        self.splits = splits
        self.config = config
        self.output_dir = Path(output_dir) if output_dir else None
        self.null_value = null_value
        self.optimizer = AdamOptimizer(
            dict(params.named()),
            lr=config.lr,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.adam_eps,
            weight_decay=config.weight_decay,
        )
        self.state = TrainState()
        if not params.config.use_curriculum:
            self.state.r = params.config.output_length

    @property
    def validation_stream(self) -> WindowStream:
        if self.splits.val.is_empty:
            return self.splits.train
        return self.splits.val

    def evaluate(self, stream: WindowStream) -> MetricsReport:
        pred, targets = predict_stream(
            self.params, stream, self.splits.normalizer, self.splits.target_feature
        )
        horizons = [h for h in self.config.eval_horizons if h <= self.params.config.output_length]
        return compute_metrics(pred, targets, horizons, self.null_value)

    def run_epoch(self, epoch: int) -> float:
        losses = [
            curriculum_step(
                self.state,
                batch,
                self.params,
                self.optimizer,
                self.splits.normalizer,
                self.splits.target_feature,
                self.config,
                self.null_value,
            )
            for batch in self.splits.train.batches(epoch)
        ]
        return float(np.mean(losses))

    def snapshot(self, epoch: int) -> None:
        if self.output_dir is None or epoch not in self.config.snapshot_epochs:
            return
        path = self.output_dir / f"graph_epoch_{epoch}.csv"
        save_dense_csv(latent_adjacency(self.params), path)
        logger.debug("Graph snapshot written", epoch=epoch, path=str(path))

    def train(self) -> TrainResult:
        """Epochs until max_epochs or `tolerance` epochs without improvement"""
        config = self.config
        stream = self.validation_stream
        if stream is self.splits.train:
            logger.warning("No validation windows; early stopping follows the training split")

        logger.info(
            "🚀 Training started",
            max_epochs=config.max_epochs,
            train_windows=len(self.splits.train),
            val_windows=len(self.splits.val),
            lr=config.lr,
        )
        self.snapshot(0)
        best_report: Optional[MetricsReport] = None
        state = self.state

        for epoch in range(1, config.max_epochs + 1):
            train_loss = self.run_epoch(epoch)
            report = self.evaluate(stream)
            state.history.append(
                EpochRecord(
                    epoch=epoch,
                    train_loss=train_loss,
                    val_mae=report.overall.mae,
                    val_rmse=report.overall.rmse,
                    val_mape=report.overall.mape_percent,
                    lr=self.optimizer.lr,
                    r=state.r,
                )
            )
            logger.info(
                "Epoch finished",
                epoch=epoch,
                train_loss=round(train_loss, 6),
                val_mae=round(report.overall.mae, 6),
                lr=self.optimizer.lr,
                r=state.r,
            )

            if report.overall.mae < state.best_val_mae:
                state.best_val_mae = report.overall.mae
                state.best_epoch = epoch
                state.best_params = self.params.state_dict()
                state.epochs_without_improvement = 0
                best_report = report
            else:
                state.epochs_without_improvement += 1

            self.snapshot(epoch)
            self.optimizer.lr *= config.lr_decay

            if state.epochs_without_improvement > config.tolerance:
                logger.info(
                    "🛑 Early stopping",
                    epoch=epoch,
                    best_epoch=state.best_epoch,
                    best_val_mae=state.best_val_mae,
                )
                break

        if state.best_params is not None:
            self.params.load_state_dict(state.best_params)
        state.moments = self.optimizer.state_dict()

        if self.output_dir is not None:
            save_history(state.history, self.output_dir / "history.csv")
        logger.info(
            "✅ Training finished",
            epochs=len(state.history),
            best_epoch=state.best_epoch,
            best_val_mae=state.best_val_mae,
        )
        return TrainResult(state=state, best_report=best_report)


def history_frame(history: List[EpochRecord]) -> pd.DataFrame:
    return pd.DataFrame([vars(record) for record in history], columns=HISTORY_COLUMNS)


def save_history(history: List[EpochRecord], path: Union[str, Path]) -> None:
    """History CSV: epoch,train_loss,val_mae,val_rmse,val_mape,lr,r"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history_frame(history).to_csv(path, index=False, float_format="%.8g")


def save_loss_history(losses: List[float], path: Union[str, Path]) -> None:
    """Generator init history CSV: epoch,loss"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"epoch": np.arange(len(losses)), "loss": losses})
    frame.to_csv(path, index=False, float_format="%.8g")


def summarize_runs(reports: Dict[int, MetricsReport]) -> pd.DataFrame:
    """Mean and standard deviation of each metric over repeated seeds"""
    rows = []
    first = next(iter(reports.values()))
    for row in first.rows():
        for metric in ("mae", "rmse", "mape_percent"):
            values = np.array(
                [getattr(_row_for(report, row.horizon), metric) for report in reports.values()]
            )
            mean, std = float(values.mean()), float(values.std())
            rows.append(
                {
                    "metric": f"{metric}@{row.horizon}",
                    "mean": mean,
                    "std": std,
                    "formatted": f"{mean:.4f}±{std:.4f}",
                }
            )
    return pd.DataFrame(rows, columns=["metric", "mean", "std", "formatted"])


def _row_for(report: MetricsReport, horizon: str):
    for row in report.rows():
        if row.horizon == horizon:
            return row
    raise KeyError(horizon)
