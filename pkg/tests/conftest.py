"""
Test Configuration - pytest setup and fixtures
"""

import json
from pathlib import Path

import numpy as np
import pytest

from stlgsl import autodiff as ad
from stlgsl.models.config import ModelConfig, TrainConfig
from stlgsl.services.dataset_service import generate_synthetic, save_dataset, save_matrix_csv


@pytest.fixture(autouse=True)
def clean_tape():
    """Every test starts and ends with an empty tape"""
    ad.current_tape().reset()
    yield
    ad.current_tape().reset()


@pytest.fixture
def rng():
    """Seeded random generator"""
    return np.random.default_rng(1234)


@pytest.fixture
def float64():
    """64-bit tensors for gradient checks"""
    with ad.precision("float64"):
        yield


@pytest.fixture
def toy_model_config():
    """Small network that still exercises every block component"""
    return ModelConfig(
        blocks=3,
        kernel_size=2,
        dilations=[1, 2, 4],
        residual_channels=4,
        skip_channels=6,
        end_channels=5,
        diffusion_steps=1,
        input_length=8,
        output_length=3,
        neighbors=2,
        embedding_dim=4,
        generator_hidden=[6],
        init_epochs=5,
    )


@pytest.fixture
def toy_train_config():
    """Short training schedule"""
    return TrainConfig(
        lr=1e-2,
        batch_size=16,
        step_size=5,
        max_epochs=3,
        tolerance=3,
        eval_horizons=[1, 3],
    )


@pytest.fixture
def synthetic_dir(tmp_path):
    """Tiny planted-graph dataset written as STLG plus adjacency CSV"""
    series, graph = generate_synthetic(8, 400, k_true=2, seed=3)
    data_dir = tmp_path / "data"
    save_dataset(series, data_dir / "series.stlg")
    save_matrix_csv(graph, data_dir / "adjacency.csv")
    return data_dir


@pytest.fixture
def run_config_file(tmp_path, synthetic_dir, toy_model_config, toy_train_config) -> Path:
    """JSON run config pointing at the tiny synthetic dataset"""
    document = {
        "data": {
            "dataset": str(synthetic_dir / "series.stlg"),
            "adjacency": str(synthetic_dir / "adjacency.csv"),
        },
        "model": toy_model_config.model_dump(mode="json"),
        "train": toy_train_config.model_dump(mode="json"),
        "seed": 11,
        "output_dir": str(tmp_path / "run"),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document, indent=2), encoding="utf-8")
    return path
