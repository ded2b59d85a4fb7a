"""
Pipeline Service - end-to-end runs driven by a RunConfig
Prepares data and graph inputs, then trains, evaluates, predicts and exports
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
import structlog

from .. import autodiff as ad
from ..config import settings
from ..errors import ConfigError, DataError
from ..models.config import RunConfig
from ..models.reports import MetricsReport
from ..models.series import DatasetSplits, TrafficSeries
from . import checkpoint_service
from .dataset_service import load_dataset, load_predefined_graph, save_dense_csv, split_and_window
from .forecaster import GraphInputs, ModelParams, forward, latent_adjacency, model_init, pretrain_generator
from .graph_generator import InitResult, normalize_graph, support_precision, support_recall
from .metrics_service import compute_metrics, save_report
from .training_service import (
    Trainer,
    TrainResult,
    historical_average_baseline,
    predict_stream,
    save_loss_history,
    summarize_runs,
)

logger = structlog.get_logger(__name__)

CHECKPOINT_NAME = "model.ckpt"


def resolve_seed(seed: Optional[int]) -> int:
    """Explicit seed, else STLGSL_SEED, else 0"""
    if seed is not None:
        return seed
    if settings.SEED is not None:
        return settings.SEED
    return 0


@dataclass
class PreparedData:
    """Series, splits and graph inputs derived from a RunConfig"""

    series: TrafficSeries
    splits: DatasetSplits
    graph: GraphInputs


@dataclass
class RunOutcome:
    """Artifacts of one training run"""

    params: ModelParams
    result: TrainResult
    test_report: Optional[MetricsReport]
    output_dir: Path
    init: InitResult = field(default_factory=InitResult)


def graph_summary(learned: np.ndarray, a_pre: np.ndarray, symmetrize: bool = True) -> Dict[str, float]:
    """Edge-support precision/recall and Frobenius relative error against A_pre"""
    with ad.no_grad():
        reference = normalize_graph(ad.Tensor(a_pre), symmetrize).data.astype(np.float64)
    norm = float(np.linalg.norm(reference))
    return {
        "precision": support_precision(learned, a_pre),
        "recall": support_recall(learned, a_pre),
        "frobenius_relative_error": float(np.linalg.norm(learned - reference)) / norm if norm else 0.0,
    }


class PipelineService:
    """End-to-end runs for one RunConfig, seed and output directory"""

    def __init__(self, run: RunConfig, seed: Optional[int] = None, output_dir: Optional[str] = None):
        self.run = run
        self.seed = resolve_seed(seed if seed is not None else run.seed)
        self.output_dir = Path(output_dir or run.output_dir)
        self._prepared: Optional[PreparedData] = None

    @property
    def prepared(self) -> PreparedData:
        if self._prepared is None:
            self._prepared = self.prepare_data()
        return self._prepared

    def prepare_data(self) -> PreparedData:
        """Load the series, split and window it, and build the graph inputs"""
        data, model = self.run.data, self.run.model
        series = load_dataset(data.dataset, data.nan_policy)
        if data.target_feature >= series.num_features:
            raise ConfigError(
                f"target_feature {data.target_feature} but dataset has {series.num_features} features"
            )
        splits = split_and_window(
            series,
            ratios=data.ratios,
            input_length=model.input_length,
            output_length=model.output_length,
            batch_size=self.run.train.batch_size,
            target_feature=data.target_feature,
            seed=self.seed,
        )
        a_pre = load_predefined_graph(data, series.num_nodes)
        graph = GraphInputs(
            a_pre=a_pre,
            generator_input=splits.generator_input if model.use_generator else None,
        )
        return PreparedData(series=series, splits=splits, graph=graph)

    def evaluate_test(self, params: ModelParams) -> Optional[MetricsReport]:
        splits = self.prepared.splits
        if splits.test.is_empty:
            logger.warning("Test split holds no window; skipping test metrics")
            return None
        pred, targets = predict_stream(params, splits.test, splits.normalizer, splits.target_feature)
        return compute_metrics(pred, targets, self.run.train.eval_horizons, self.run.data.null_value)

    def baseline_test(self) -> MetricsReport:
        """Historical-average report on the test split"""
        pred, targets = historical_average_baseline(self.prepared.splits.test)
        return compute_metrics(pred, targets, self.run.train.eval_horizons, self.run.data.null_value)

    def _new_model(self) -> ModelParams:
        series = self.prepared.series
        return model_init(self.run.model, series.num_nodes, series.num_features, self.seed, self.prepared.graph)

    def init_graph(self) -> Tuple[ModelParams, InitResult]:
        """Build the model and pre-train only its generator; writes an epoch-0 checkpoint"""
        prepared = self.prepared
        if not self.run.model.use_generator:
            raise ConfigError("init-graph needs use_generator=true")
        if prepared.graph.a_pre is None:
            raise ConfigError("init-graph needs a pre-defined adjacency or distance table")

        params = self._new_model()
        init = pretrain_generator(params)
        save_loss_history(init.losses, self.output_dir / "init_history.csv")
        checkpoint_service.save_checkpoint(
            params,
            self.output_dir / "init.ckpt",
            prepared.splits.normalizer,
            {"seed": self.seed, "epoch": 0},
        )
        return params, init

    def train(self, init_from: Optional[str] = None) -> RunOutcome:
        """Initialize (optionally pre-train the generator), train, test and save"""
        prepared = self.prepared
        series = prepared.series
        out = self.output_dir

        init = InitResult()
        if init_from:
            checkpoint = checkpoint_service.load_checkpoint(init_from)
            checkpoint_service.check_compatible(checkpoint, self.run.model, series.num_nodes, series.num_features)
            params = checkpoint_service.restore_model(checkpoint, prepared.graph)
            logger.info("Starting from checkpoint", path=init_from)
        else:
            params = self._new_model()
            init = pretrain_generator(params)
            if init.losses:
                save_loss_history(init.losses, out / "init_history.csv")

        trainer = Trainer(params, prepared.splits, self.run.train, out, self.run.data.null_value)
        result = trainer.train()
        test_report = self.evaluate_test(params)

        checkpoint_service.save_checkpoint(
            params,
            out / CHECKPOINT_NAME,
            prepared.splits.normalizer,
            {"seed": self.seed, "best_epoch": result.state.best_epoch},
        )
        if test_report is not None:
            save_report(test_report, out / "test_metrics.csv")
        return RunOutcome(params=params, result=result, test_report=test_report, output_dir=out, init=init)

    def train_repeats(self, repeats: int) -> pd.DataFrame:
        """Train seeds seed..seed+n-1 into sub-directories and summarize test metrics"""
        reports: Dict[int, MetricsReport] = {}
        for offset in range(repeats):
            run_seed = self.seed + offset
            service = PipelineService(self.run, run_seed, str(self.output_dir / f"seed_{run_seed}"))
            outcome = service.train()
            if outcome.test_report is None:
                raise DataError("repeated runs need a non-empty test split")
            reports[run_seed] = outcome.test_report

        summary = summarize_runs(reports)
        path = self.output_dir / "repeats.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        summary.to_csv(path, index=False, float_format="%.6f")
        logger.info("✅ Repeated runs summarized", runs=repeats, path=str(path))
        return summary

    def load_for_inference(self, checkpoint_path: str) -> ModelParams:
        """Checkpoint restored against this run's data, with the pair verified"""
        checkpoint = checkpoint_service.load_checkpoint(checkpoint_path)
        prepared = self.prepared
        series = prepared.series
        checkpoint_service.check_compatible(checkpoint, self.run.model, series.num_nodes, series.num_features)

        if checkpoint.normalizer is not None:
            fitted = prepared.splits.normalizer
            if not (
                np.allclose(checkpoint.normalizer.mean, fitted.mean, atol=1e-4, rtol=1e-5)
                and np.allclose(checkpoint.normalizer.std, fitted.std, atol=1e-4, rtol=1e-5)
            ):
                raise ConfigError("checkpoint normalizer does not match this dataset's training split")
        return checkpoint_service.restore_model(checkpoint, prepared.graph)

    def evaluate(
        self,
        checkpoint_path: str,
        output_path: Path,
        with_baseline: bool = False,
    ) -> Tuple[MetricsReport, Optional[MetricsReport]]:
        """Test-split report for a checkpoint, optionally with the HA baseline"""
        params = self.load_for_inference(checkpoint_path)
        report = self.evaluate_test(params)
        if report is None:
            raise DataError("test split holds no full window to evaluate")
        save_report(report, output_path)

        baseline = None
        if with_baseline:
            baseline = self.baseline_test()
            save_report(baseline, output_path.with_name(f"{output_path.stem}_baseline{output_path.suffix}"))
        return report, baseline

    def predict(self, checkpoint_path: str, at: int, output_path: Path) -> np.ndarray:
        """T_out x M raw-unit forecast for the input window ending at step `at`"""
        params = self.load_for_inference(checkpoint_path)
        series, splits = self.prepared.series, self.prepared.splits
        input_length = self.run.model.input_length
        if not input_length - 1 <= at < series.num_steps:
            raise DataError(
                f"--at must lie in {input_length - 1}..{series.num_steps - 1}, got {at}"
            )

        window = series.values[at - input_length + 1:at + 1].astype(np.float64)
        inputs = splits.normalizer.transform(window)[None]
        with ad.no_grad():
            out = forward(inputs, params)
        forecast = splits.normalizer.inverse_target(out.data[0].astype(np.float64), splits.target_feature)

        frame = pd.DataFrame(forecast, columns=[str(n) for n in range(series.num_nodes)])
        frame.insert(0, "horizon", np.arange(1, self.run.model.output_length + 1))
        output_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(output_path, index=False, float_format="%.6f")
        logger.info("✅ Forecast written", path=str(output_path), window_end=at)
        return forecast

    def export_graph(self, checkpoint_path: str, out_dir: Path) -> Tuple[Path, Optional[Dict[str, float]]]:
        """Write the normalized adjacency, and a comparison summary when A_pre exists"""
        params = self.load_for_inference(checkpoint_path)
        if not params.uses_generator:
            logger.warning("Checkpoint has no graph generator; exporting the normalized pre-defined graph")

        adjacency = latent_adjacency(params)
        graph_path = out_dir / "graph.csv"
        save_dense_csv(adjacency, graph_path)

        summary = None
        a_pre = self.prepared.graph.a_pre
        if a_pre is not None:
            summary = graph_summary(adjacency, a_pre, self.run.model.symmetrize)
            (out_dir / "graph_summary.json").write_text(
                json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8"
            )
        logger.info("✅ Graph exported", path=str(graph_path), summary=summary)
        return graph_path, summary
