"""
Model Tests - initialization, forward pass and end-to-end gradients
"""

import numpy as np
import pytest

from stlgsl import autodiff as ad
from stlgsl.autodiff import Tensor
from stlgsl.errors import ConfigError, DimensionError
from stlgsl.models.config import ModelConfig, PadMode
from stlgsl.services.forecaster import (
    GraphInputs,
    current_graph,
    forward,
    latent_adjacency,
    model_init,
    pretrain_generator,
)
from stlgsl.services.graph_generator import normalize_graph
from stlgsl.services.training_service import mae_loss


def _graph_inputs(rng, num_nodes: int, history: int = 30, with_a_pre: bool = True) -> GraphInputs:
    a_pre = None
    if with_a_pre:
        raw = rng.uniform(size=(num_nodes, num_nodes))
        a_pre = raw + raw.T
    return GraphInputs(a_pre=a_pre, generator_input=rng.normal(size=(num_nodes, history)))


def _sigmoid(value: float) -> float:
    return 1.0 / (1.0 + np.exp(-value))


class TestModelInit:
    """Test parameter creation"""

    def test_same_seed_same_params(self, rng, toy_model_config):
        graph = _graph_inputs(rng, 5)
        first = model_init(toy_model_config, 5, 1, seed=3, graph=graph).state_dict()
        second = model_init(toy_model_config, 5, 1, seed=3, graph=graph).state_dict()
        assert list(first) == list(second)
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])

    def test_different_seed(self, rng, toy_model_config):
        graph = _graph_inputs(rng, 5)
        first = model_init(toy_model_config, 5, 1, seed=3, graph=graph)
        second = model_init(toy_model_config, 5, 1, seed=4, graph=graph)
        assert not np.array_equal(first["input.weight"].data, second["input.weight"].data)

    def test_default_receptive_field(self):
        assert ModelConfig().receptive_field == 16

    def test_receptive_field_guard(self, rng):
        config = ModelConfig(blocks=2, dilations=[1, 1], kernel_size=2, input_length=12)
        with pytest.raises(ConfigError, match="receptive field"):
            model_init(config, 5, 1, seed=0, graph=_graph_inputs(rng, 5))

    def test_tensor_layout(self, rng, toy_model_config):
        params = model_init(toy_model_config, 5, 2, seed=0, graph=_graph_inputs(rng, 5))
        assert params["input.weight"].shape == (2, 4)
        assert params["blocks.0.filter.weight"].shape == (4, 4, 2)
        assert params["blocks.2.diffusion.backward.1"].shape == (4, 4)
        assert params["blocks.1.skip.weight"].shape == (4, 6)
        assert params["head.1.weight"].shape == (5, 3)
        assert params["generator.mlp.0.weight"].shape == (30, 6)
        assert not params["blocks.0.gate.bias"].data.any()

    def test_latent_only_layout(self, rng, toy_model_config):
        params = model_init(toy_model_config, 5, 1, seed=0, graph=_graph_inputs(rng, 5, with_a_pre=False))
        names = [name for name, _ in params.named()]
        assert "blocks.0.diffusion.latent.0" in names
        assert not any(".forward." in name or ".backward." in name for name in names)

    def test_ablation_needs_a_pre(self, rng, toy_model_config):
        config = toy_model_config.model_copy(update={"use_generator": False})
        with pytest.raises(ConfigError):
            model_init(config, 5, 1, seed=0, graph=_graph_inputs(rng, 5, with_a_pre=False))

    def test_generator_needs_history(self, toy_model_config):
        with pytest.raises(ConfigError):
            model_init(toy_model_config, 5, 1, seed=0, graph=GraphInputs(a_pre=np.ones((5, 5))))

    def test_a_pre_shape(self, rng, toy_model_config):
        graph = GraphInputs(a_pre=np.ones((4, 4)), generator_input=rng.normal(size=(5, 30)))
        with pytest.raises(DimensionError):
            model_init(toy_model_config, 5, 1, seed=0, graph=graph)

    def test_neighbors_clamped(self, rng, toy_model_config):
        config = toy_model_config.model_copy(update={"neighbors": 10})
        params = model_init(config, 4, 1, seed=0, graph=_graph_inputs(rng, 4))
        assert params.generator.k == 3

    def test_state_dict_round_trip(self, rng, toy_model_config):
        params = model_init(toy_model_config, 5, 1, seed=0, graph=_graph_inputs(rng, 5))
        state = params.state_dict()
        params["head.1.bias"].data += 1.0
        params.load_state_dict(state)
        assert not params["head.1.bias"].data.any()

    def test_state_dict_mismatch(self, rng, toy_model_config):
        params = model_init(toy_model_config, 5, 1, seed=0, graph=_graph_inputs(rng, 5))
        state = params.state_dict()
        state.pop("head.1.bias")
        with pytest.raises(ConfigError):
            params.load_state_dict(state)

    def test_pretrain_respects_switch(self, rng, toy_model_config):
        graph = _graph_inputs(rng, 5)
        params = model_init(toy_model_config, 5, 1, seed=0, graph=graph)
        assert len(pretrain_generator(params).losses) == toy_model_config.init_epochs + 1

        config = toy_model_config.model_copy(update={"use_predefined_init": False})
        params = model_init(config, 5, 1, seed=0, graph=graph)
        assert pretrain_generator(params).losses == []


class TestForward:
    """Test the assembled network"""

    def test_output_shape(self, rng, toy_model_config):
        params = model_init(toy_model_config, 5, 2, seed=0, graph=_graph_inputs(rng, 5))
        out = forward(rng.normal(size=(3, 8, 5, 2)), params)
        assert out.shape == (3, 3, 5)
        assert np.isfinite(out.data).all()

    def test_input_shape_checked(self, rng, toy_model_config):
        params = model_init(toy_model_config, 5, 1, seed=0, graph=_graph_inputs(rng, 5))
        with pytest.raises(DimensionError):
            forward(rng.normal(size=(3, 7, 5, 1)), params)

    def test_without_generator(self, rng, toy_model_config):
        config = toy_model_config.model_copy(update={"use_generator": False})
        graph = _graph_inputs(rng, 5)
        params = model_init(config, 5, 1, seed=0, graph=GraphInputs(a_pre=graph.a_pre))
        assert not params.uses_generator
        out = forward(rng.normal(size=(2, 8, 5, 1)), params)
        assert out.shape == (2, 3, 5)
        with ad.no_grad():
            expected = normalize_graph(Tensor(graph.a_pre)).data
        np.testing.assert_allclose(latent_adjacency(params), expected, atol=1e-6)

    def test_valid_padding(self, rng, toy_model_config):
        config = toy_model_config.model_copy(update={"pad": PadMode.VALID, "input_length": 6})
        params = model_init(config, 5, 1, seed=0, graph=_graph_inputs(rng, 5))
        assert forward(rng.normal(size=(2, 6, 5, 1)), params).shape == (2, 3, 5)

    def test_pure(self, rng, toy_model_config):
        params = model_init(toy_model_config, 5, 1, seed=0, graph=_graph_inputs(rng, 5))
        inputs = rng.normal(size=(2, 8, 5, 1))
        with ad.no_grad():
            first = forward(inputs, params).data
            second = forward(inputs, params).data
        np.testing.assert_array_equal(first, second)

    def test_skip_path_oracle(self, rng, toy_model_config, float64):
        """Zero conv taps make every block's gate output a constant the head maps by hand"""
        params = model_init(toy_model_config, 4, 1, seed=0, graph=_graph_inputs(rng, 4))
        for name, tensor in params.named():
            if ".filter.weight" in name or ".gate.weight" in name:
                tensor.data[...] = 0.0

        config = toy_model_config
        expected_skip = np.zeros(config.skip_channels)
        for block in range(config.blocks):
            params[f"blocks.{block}.filter.bias"].data[...] = rng.normal(size=config.residual_channels)
            params[f"blocks.{block}.gate.bias"].data[...] = rng.normal(size=config.residual_channels)
            params[f"blocks.{block}.skip.bias"].data[...] = rng.normal(size=config.skip_channels)
            filter_bias = params[f"blocks.{block}.filter.bias"].data
            gate_bias = params[f"blocks.{block}.gate.bias"].data
            skip_weight = params[f"blocks.{block}.skip.weight"].data
            skip_bias = params[f"blocks.{block}.skip.bias"].data
            hidden = [np.tanh(filter_bias[c]) * _sigmoid(gate_bias[c]) for c in range(config.residual_channels)]
            for j in range(config.skip_channels):
                expected_skip[j] += sum(hidden[c] * skip_weight[c, j] for c in range(config.residual_channels))
                expected_skip[j] += skip_bias[j]

        params["head.0.bias"].data[...] = rng.normal(size=config.end_channels)
        params["head.1.bias"].data[...] = rng.normal(size=config.output_length)
        w0, b0 = params["head.0.weight"].data, params["head.0.bias"].data
        w1, b1 = params["head.1.weight"].data, params["head.1.bias"].data
        first = [
            max(0.0, sum(max(0.0, expected_skip[j]) * w0[j, e] for j in range(config.skip_channels)) + b0[e])
            for e in range(config.end_channels)
        ]
        horizons = [sum(first[e] * w1[e, t] for e in range(config.end_channels)) + b1[t] for t in range(3)]

        out = forward(rng.normal(size=(2, 8, 4, 1)), params).data
        for t in range(3):
            np.testing.assert_allclose(out[:, t, :], np.full((2, 4), horizons[t]), atol=1e-10)

    def test_permutation_equivariance(self, rng, toy_model_config, float64):
        graph = _graph_inputs(rng, 5)
        inputs = rng.normal(size=(2, 8, 5, 1))
        perm = np.array([3, 0, 4, 1, 2])
        permuted = GraphInputs(
            a_pre=graph.a_pre[perm][:, perm],
            generator_input=graph.generator_input[perm],
        )
        with ad.no_grad():
            out = forward(inputs, model_init(toy_model_config, 5, 1, seed=2, graph=graph)).data
            out_perm = forward(inputs[:, :, perm], model_init(toy_model_config, 5, 1, seed=2, graph=permuted)).data
        np.testing.assert_allclose(out_perm, out[:, :, perm], atol=1e-10)

    def test_graph_is_recomputed_from_generator(self, rng, toy_model_config):
        params = model_init(toy_model_config, 5, 1, seed=0, graph=_graph_inputs(rng, 5))
        before = latent_adjacency(params)
        params.generator.weights[0].data[...] = rng.normal(size=params.generator.weights[0].shape)
        assert not np.array_equal(before, latent_adjacency(params))
        assert current_graph(params).shape == (5, 5)


class TestEndToEndGradient:
    """Finite-difference check of the loss through the whole network"""

    @pytest.mark.parametrize(
        "name",
        [
            "input.weight",
            "blocks.0.filter.weight",
            "blocks.1.gate.bias",
            "blocks.1.diffusion.forward.1",
            "blocks.0.diffusion.latent.0",
            "blocks.1.residual.weight",
            "blocks.2.skip.weight",
            "head.0.weight",
            "head.1.bias",
            "generator.mlp.0.weight",
            "generator.mlp.1.bias",
        ],
    )
    def test_parameter_gradient(self, rng, toy_model_config, float64, name):
        config = toy_model_config.model_copy(update={"neighbors": 3})
        params = model_init(config, 4, 1, seed=5, graph=_graph_inputs(rng, 4, history=12))
        inputs = rng.normal(size=(2, 8, 4, 1))
        targets = rng.normal(size=(2, 3, 4))
        original = params.tensors[name]
        generator_lists = [params.generator.weights, params.generator.biases]

        def objective(candidate):
            params.tensors[name] = candidate
            for group in generator_lists:
                for i, tensor in enumerate(group):
                    if tensor is original:
                        group[i] = candidate
            try:
                return mae_loss(forward(inputs, params), targets)
            finally:
                params.tensors[name] = original
                for group in generator_lists:
                    for i, tensor in enumerate(group):
                        if tensor is candidate:
                            group[i] = original

        assert ad.grad_check(objective, original) < 1e-4
