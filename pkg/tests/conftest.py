"""Pytest configuration helpers and shared fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from certsensor.data import generate
from certsensor.network import DenseNet
from certsensor.schema import TrainConfig


def pytest_addoption(parser):
    """Register coverage options when pytest-cov is unavailable.

    ``pyproject.toml`` passes ``--cov`` flags by default; without the plugin pytest would abort
    with ``unrecognized arguments``, so lightweight placeholders are registered instead.
    """

    try:
        import pytest_cov  # noqa: F401
    except ImportError:
        parser.addoption("--cov", action="append", default=[], help="dummy option")
        parser.addoption(
            "--cov-report", action="append", default=[], help="dummy option"
        )


def random_net(rng: np.random.Generator, input_dim: int, hidden_dim: int, scale: float = 1.0) -> DenseNet:
    return DenseNet(
        W1=rng.normal(0.0, scale, size=(hidden_dim, input_dim)),
        b1=rng.normal(0.0, scale, size=hidden_dim),
        w2=rng.normal(0.0, scale, size=hidden_dim),
        b2=float(rng.normal(0.0, scale)),
    )


@pytest.fixture
def hand_net() -> DenseNet:
    """``f(x) = ReLU(x - 0.1)`` on a single input."""

    return DenseNet(W1=[[1.0]], b1=[-0.1], w2=[1.0], b2=0.0)


@pytest.fixture
def small_dataset():
    return generate(200, 6, seed=3)


@pytest.fixture
def fast_train_config() -> TrainConfig:
    return TrainConfig(hidden_dim=8, epochs=6, batch_size=32, seed=5)


@pytest.fixture
def make_net():
    return random_net
