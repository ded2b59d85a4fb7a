"""
Checkpoint Tests - parameter file format and model restoration
"""

import struct

import numpy as np
import pytest

from stlgsl import autodiff as ad
from stlgsl.errors import ConfigError, DataError
from stlgsl.models.series import Normalizer
from stlgsl.services.checkpoint_service import (
    check_compatible,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from stlgsl.services.forecaster import GraphInputs, forward, model_init


@pytest.fixture
def graph(rng):
    raw = rng.uniform(size=(5, 5))
    return GraphInputs(a_pre=raw + raw.T, generator_input=rng.normal(size=(5, 30)))


@pytest.fixture
def params(toy_model_config, graph):
    return model_init(toy_model_config, 5, 1, seed=4, graph=graph)


@pytest.fixture
def normalizer(rng):
    return Normalizer.fit(rng.normal(3.0, 2.0, size=(50, 5, 1)))


class TestCheckpointFile:
    """Test save and load"""

    def test_round_trip(self, params, normalizer, tmp_path):
        save_checkpoint(params, tmp_path / "model.ckpt", normalizer, {"seed": 4})
        checkpoint = load_checkpoint(tmp_path / "model.ckpt")
        assert checkpoint.config == params.config
        assert (checkpoint.num_nodes, checkpoint.num_features, checkpoint.history_length) == (5, 1, 30)
        assert checkpoint.metadata == {"seed": 4}
        assert list(checkpoint.tensors) == [name for name, _ in params.named()]
        for name, tensor in params.named():
            np.testing.assert_array_equal(checkpoint.tensors[name], tensor.data.astype(np.float32))
        np.testing.assert_allclose(checkpoint.normalizer.mean, normalizer.mean, rtol=1e-6)
        assert checkpoint.needs_predefined_graph

    def test_header(self, params, tmp_path):
        save_checkpoint(params, tmp_path / "model.ckpt")
        raw = (tmp_path / "model.ckpt").read_bytes()
        magic, version, _ = struct.unpack_from("<4sII", raw)
        assert (magic, version) == (b"STCK", 1)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "bad.ckpt").write_bytes(struct.pack("<4sII", b"NOPE", 1, 0))
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(tmp_path / "bad.ckpt")

    def test_truncated_payload(self, params, tmp_path):
        save_checkpoint(params, tmp_path / "model.ckpt")
        raw = (tmp_path / "model.ckpt").read_bytes()
        (tmp_path / "short.ckpt").write_bytes(raw[:-8])
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "short.ckpt")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "absent.ckpt")


class TestRestore:
    """Test rebuilding a model from a checkpoint"""

    def test_restored_forward_matches(self, params, graph, tmp_path, rng):
        save_checkpoint(params, tmp_path / "model.ckpt")
        restored = restore_model(load_checkpoint(tmp_path / "model.ckpt"), graph)
        inputs = rng.normal(size=(2, 8, 5, 1))
        with ad.no_grad():
            np.testing.assert_array_equal(forward(inputs, restored).data, forward(inputs, params).data)

    def test_needs_the_adjacency(self, params, graph, tmp_path):
        save_checkpoint(params, tmp_path / "model.ckpt")
        with pytest.raises(ConfigError):
            restore_model(load_checkpoint(tmp_path / "model.ckpt"), GraphInputs(generator_input=graph.generator_input))

    def test_latent_only_checkpoint_ignores_adjacency(self, toy_model_config, graph, tmp_path):
        latent_only = model_init(toy_model_config, 5, 1, seed=4, graph=GraphInputs(generator_input=graph.generator_input))
        save_checkpoint(latent_only, tmp_path / "model.ckpt")
        restored = restore_model(load_checkpoint(tmp_path / "model.ckpt"), graph)
        assert restored.graph.a_pre is None

    def test_history_length_mismatch(self, params, tmp_path, rng, graph):
        save_checkpoint(params, tmp_path / "model.ckpt")
        shorter = GraphInputs(a_pre=graph.a_pre, generator_input=rng.normal(size=(5, 20)))
        with pytest.raises(ConfigError, match="history length"):
            restore_model(load_checkpoint(tmp_path / "model.ckpt"), shorter)

    def test_compatibility(self, params, toy_model_config, tmp_path):
        save_checkpoint(params, tmp_path / "model.ckpt")
        checkpoint = load_checkpoint(tmp_path / "model.ckpt")
        check_compatible(checkpoint, toy_model_config.model_copy(update={"init_epochs": 0}), 5, 1)
        with pytest.raises(ConfigError):
            check_compatible(checkpoint, toy_model_config.model_copy(update={"skip_channels": 7}), 5, 1)
        with pytest.raises(ConfigError):
            check_compatible(checkpoint, toy_model_config, 6, 1)
