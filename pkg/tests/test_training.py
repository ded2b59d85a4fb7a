"""
Training Tests - loss, curriculum schedule, optimizer and the epoch loop
"""

import numpy as np
import pandas as pd
import pytest

from stlgsl import autodiff as ad
from stlgsl.autodiff import Tensor
from stlgsl.errors import DataError, DimensionError, NumericError
from stlgsl.models.reports import HorizonMetrics, MetricsReport, TrainState
from stlgsl.models.series import WindowStream
from stlgsl.services.dataset_service import generate_synthetic, split_and_window
from stlgsl.services.forecaster import GraphInputs, model_init
from stlgsl.services.optimizer import AdamOptimizer
from stlgsl.services.training_service import (
    HISTORY_COLUMNS,
    Trainer,
    curriculum_level,
    curriculum_step,
    historical_average_baseline,
    mae_loss,
    predict_stream,
    save_loss_history,
    summarize_runs,
)


@pytest.fixture
def tiny_splits(toy_model_config, toy_train_config):
    series, graph = generate_synthetic(8, 400, k_true=2, seed=3)
    splits = split_and_window(
        series,
        input_length=toy_model_config.input_length,
        output_length=toy_model_config.output_length,
        batch_size=toy_train_config.batch_size,
        seed=11,
    )
    return splits, graph


def _build(tiny_splits, model_config, seed=11):
    splits, graph = tiny_splits
    inputs = GraphInputs(a_pre=graph, generator_input=splits.generator_input)
    return model_init(model_config, 8, 1, seed=seed, graph=inputs)


def _stream(values: np.ndarray, input_length: int, output_length: int) -> WindowStream:
    series = values.reshape(len(values), -1)
    return WindowStream(
        name="test",
        normalized=series[:, :, None],
        raw_target=series,
        offset=0,
        input_length=input_length,
        output_length=output_length,
        batch_size=4,
    )


class TestMaeLoss:
    """Test the masked mean absolute error"""

    def test_perfect_forecast(self):
        y = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert mae_loss(Tensor(y), y).item() == 0.0

    def test_constant_offset(self, rng):
        y = rng.normal(size=(3, 4))
        assert mae_loss(Tensor(y + 0.25), y).item() == pytest.approx(0.25, abs=1e-6)

    def test_hand_example(self):
        loss = mae_loss(Tensor([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0, 2.0], [5.0, 4.0]]))
        assert loss.item() == pytest.approx(0.75)

    def test_mask(self):
        mask = np.array([[1.0, 1.0], [0.0, 1.0]])
        loss = mae_loss(Tensor([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0, 2.0], [5.0, 4.0]]), mask)
        assert loss.item() == pytest.approx(1.0 / 3.0)

    def test_everything_masked(self):
        with pytest.raises(DataError):
            mae_loss(Tensor(np.ones((2, 2))), np.zeros((2, 2)), np.zeros((2, 2)))

    def test_empty_slice(self):
        with pytest.raises(DataError):
            mae_loss(Tensor(np.ones((0, 2))), np.ones((0, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mae_loss(Tensor(np.ones((2, 3))), np.ones((3, 2)))


class TestCurriculum:
    """Test the task-level schedule"""

    def _trace(self, iterations, step_size, output_length):
        r, levels = 1, []
        for it in range(1, iterations + 1):
            r = curriculum_level(it, r, step_size, output_length)
            levels.append(r)
        return levels

    def test_short_schedule(self):
        assert self._trace(6, 2, 3) == [1, 2, 2, 3, 3, 3]

    def test_first_iteration_keeps_level(self):
        assert curriculum_level(1, 1, 5, 12) == 1

    def test_default_schedule_saturates(self):
        levels = self._trace(1200, 100, 12)
        assert levels[98] == 1
        assert levels[99] == 2
        assert levels[1098] == 11
        assert levels[1099] == 12
        assert max(levels) == 12

    def test_step_advances_iteration(self, tiny_splits, toy_model_config, toy_train_config):
        splits, _ = tiny_splits
        params = _build(tiny_splits, toy_model_config)
        optimizer = AdamOptimizer(dict(params.named()), lr=1e-3)
        state = TrainState()
        batch = next(splits.train.batches(1))
        levels = []
        for _ in range(6):
            loss = curriculum_step(
                state, batch, params, optimizer, splits.normalizer, 0, toy_train_config
            )
            assert np.isfinite(loss)
            levels.append(state.r)
        assert state.it == 7
        assert levels == [1, 1, 1, 1, 2, 2]

    def test_curriculum_off(self, tiny_splits, toy_model_config, toy_train_config):
        splits, _ = tiny_splits
        config = toy_model_config.model_copy(update={"use_curriculum": False})
        params = _build(tiny_splits, config)
        optimizer = AdamOptimizer(dict(params.named()), lr=1e-3)
        state = TrainState()
        curriculum_step(
            state, next(splits.train.batches(1)), params, optimizer, splits.normalizer, 0, toy_train_config
        )
        assert state.r == config.output_length


class TestAdam:
    """Test the optimizer"""

    def test_first_step_moves_by_lr(self):
        weight = ad.parameter(np.array([1.0, -1.0]))
        optimizer = AdamOptimizer({"w": weight}, lr=0.1)
        weight.grad = np.array([2.0, -0.5], dtype=weight.data.dtype)
        optimizer.step()
        np.testing.assert_allclose(weight.data, [0.9, -0.9], atol=1e-6)

    def test_weight_decay_shrinks_idle_parameters(self, rng):
        weight = ad.parameter(rng.normal(size=(4, 4)))
        before = np.linalg.norm(weight.data)
        optimizer = AdamOptimizer({"w": weight}, lr=1e-2, weight_decay=1e-4)
        for _ in range(20):
            optimizer.zero_grad()
            optimizer.step()
        assert np.linalg.norm(weight.data) < before

    def test_state_dict_keys(self):
        weight = ad.parameter(np.ones(2))
        optimizer = AdamOptimizer({"w": weight})
        weight.grad = np.ones(2, dtype=weight.data.dtype)
        optimizer.step()
        assert set(optimizer.state_dict()) == {"m.w", "v.w"}


class TestHistoricalAverage:
    """Test the per-window mean baseline"""

    def test_constant_series(self):
        stream = _stream(np.full((20, 3), 4.5), 5, 2)
        pred, targets = historical_average_baseline(stream)
        np.testing.assert_array_equal(pred, targets)

    def test_window_mean(self):
        stream = _stream(np.array([1.0, 2.0, 3.0, 9.0, 9.0]), 3, 2)
        pred, targets = historical_average_baseline(stream)
        assert pred.shape == (1, 2, 1)
        np.testing.assert_array_equal(pred[0, :, 0], [2.0, 2.0])
        np.testing.assert_array_equal(targets[0, :, 0], [9.0, 9.0])


class TestTrainer:
    """Test the epoch loop"""

    def test_history_and_restored_best(self, tiny_splits, toy_model_config, toy_train_config, tmp_path):
        splits, _ = tiny_splits
        params = _build(tiny_splits, toy_model_config)
        trainer = Trainer(params, splits, toy_train_config, tmp_path)
        result = trainer.train()

        assert 1 <= len(result.history) <= toy_train_config.max_epochs
        assert [record.epoch for record in result.history] == list(range(1, len(result.history) + 1))
        assert result.state.best_val_mae == min(record.val_mae for record in result.history)
        assert trainer.evaluate(splits.val).overall.mae == pytest.approx(result.state.best_val_mae, rel=1e-9)

        frame = pd.read_csv(tmp_path / "history.csv")
        assert list(frame.columns) == HISTORY_COLUMNS
        assert len(frame) == len(result.history)

    def test_learning_rate_decays(self, tiny_splits, toy_model_config, toy_train_config):
        splits, _ = tiny_splits
        config = toy_train_config.model_copy(update={"lr_decay": 0.5, "tolerance": 3})
        result = Trainer(_build(tiny_splits, toy_model_config), splits, config).train()
        rates = [record.lr for record in result.history]
        for previous, current in zip(rates, rates[1:]):
            assert current == pytest.approx(previous * 0.5)

    def test_zero_tolerance_stops_at_first_miss(self, tiny_splits, toy_model_config, toy_train_config):
        splits, _ = tiny_splits
        config = toy_train_config.model_copy(update={"tolerance": 0, "max_epochs": 6})
        result = Trainer(_build(tiny_splits, toy_model_config), splits, config).train()
        maes = [record.val_mae for record in result.history]
        for i in range(1, len(maes) - 1):
            assert maes[i] < min(maes[:i])
        if len(maes) < 6:
            assert maes[-1] >= min(maes[:-1])

    def test_deterministic(self, tiny_splits, toy_model_config, toy_train_config, tmp_path):
        splits, _ = tiny_splits
        for name in ("first", "second"):
            Trainer(_build(tiny_splits, toy_model_config), splits, toy_train_config, tmp_path / name).train()
        first = (tmp_path / "first" / "history.csv").read_bytes()
        assert first == (tmp_path / "second" / "history.csv").read_bytes()

    def test_snapshots(self, tiny_splits, toy_model_config, toy_train_config, tmp_path):
        splits, _ = tiny_splits
        config = toy_train_config.model_copy(update={"snapshot_epochs": [0, 1], "max_epochs": 1, "tolerance": 1})
        Trainer(_build(tiny_splits, toy_model_config), splits, config, tmp_path).train()
        snapshot = pd.read_csv(tmp_path / "graph_epoch_0.csv", header=None)
        assert snapshot.shape == (8, 8)
        assert (tmp_path / "graph_epoch_1.csv").exists()

    def test_curriculum_off_uses_every_horizon(self, tiny_splits, toy_model_config, toy_train_config):
        splits, _ = tiny_splits
        config = toy_model_config.model_copy(update={"use_curriculum": False})
        result = Trainer(_build(tiny_splits, config), splits, toy_train_config.model_copy(update={"max_epochs": 1, "tolerance": 1})).train()
        assert all(record.r == config.output_length for record in result.history)

    def test_non_finite_loss(self, tiny_splits, toy_model_config, toy_train_config):
        splits, _ = tiny_splits
        params = _build(tiny_splits, toy_model_config)
        params["head.1.bias"].data[0] = np.nan
        with pytest.raises(NumericError, match="learning rate"):
            Trainer(params, splits, toy_train_config).train()

    def test_falls_back_to_training_windows(self, toy_model_config, toy_train_config):
        series, graph = generate_synthetic(8, 400, k_true=2, seed=3)
        splits = split_and_window(series, ratios=(1.0, 0.0, 0.0), input_length=8, output_length=3, batch_size=64)
        params = model_init(
            toy_model_config, 8, 1, seed=0, graph=GraphInputs(a_pre=graph, generator_input=splits.generator_input)
        )
        trainer = Trainer(params, splits, toy_train_config.model_copy(update={"max_epochs": 1, "tolerance": 1}))
        assert trainer.validation_stream is splits.train
        assert len(trainer.train().history) == 1

    def test_predict_stream_units(self, tiny_splits, toy_model_config):
        splits, _ = tiny_splits
        params = _build(tiny_splits, toy_model_config)
        pred, targets = predict_stream(params, splits.test, splits.normalizer, 0)
        assert pred.shape == targets.shape == (len(splits.test), 3, 8)
        np.testing.assert_array_equal(targets[0], splits.test.raw_target[8:11])
        assert np.isfinite(pred).all()


class TestRunSummaries:
    """Test repeated-run aggregation and loss history files"""

    def _report(self, mae: float) -> MetricsReport:
        row = HorizonMetrics(horizon="3", mae=mae, rmse=mae * 2, mape_percent=mae * 10)
        overall = HorizonMetrics(horizon="all", mae=mae, rmse=mae * 2, mape_percent=mae * 10)
        return MetricsReport(horizons=[row], overall=overall)

    def test_mean_and_std(self):
        summary = summarize_runs({0: self._report(1.0), 1: self._report(3.0)})
        row = summary[summary.metric == "mae@3"].iloc[0]
        assert row["mean"] == pytest.approx(2.0)
        assert row["std"] == pytest.approx(1.0)
        assert row["formatted"] == "2.0000±1.0000"
        assert set(summary.metric) >= {"mae@all", "rmse@3", "mape_percent@all"}

    def test_loss_history_file(self, tmp_path):
        save_loss_history([0.5, 0.25], tmp_path / "init_history.csv")
        frame = pd.read_csv(tmp_path / "init_history.csv")
        assert list(frame.columns) == ["epoch", "loss"]
        assert frame["epoch"].tolist() == [0, 1]
