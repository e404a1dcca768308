"""Shared fixtures: synthetic plains, tiny model configs, slow-test switch."""

import numpy as np
import pytest

from draco.config import EncoderConfig, ModelConfig
from draco.synth import generate_plains, synthesize_samples


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run long acceptance tests",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def tiny_encoder(strides):
    return EncoderConfig(
        block_counts=(1, 1, 1, 1),
        stem_channels=(8, 16),
        channels=(16, 16, 32, 32),
        layer_strides=tuple(strides),
        cardinality=4,
        attention_reduction=4,
        feature_dim=32,
    )


def tiny_model_config(**overrides) -> ModelConfig:
    cfg = ModelConfig(
        ridge_encoder=tiny_encoder((2, 2, 2, 2)),
        cap_encoder=tiny_encoder((1, 1, 1, 1)),
        projector_hidden=32,
        projector_blocks=2,
        router_hidden=16,
        adapter_hidden=32,
        teacher_dim=32,
        teacher_size=128,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def tiny_config():
    return tiny_model_config()


@pytest.fixture(scope="session")
def plains():
    return generate_plains(fingers=4, impressions=2, seed=1)


@pytest.fixture(scope="session")
def standard_plain(plains):
    return plains[0]


@pytest.fixture(scope="session")
def samples(plains):
    result, _ = synthesize_samples(
        plains, samples_per_plain=2, rot_range=180, trans_range=40, seed=3, teacher_size=128,
    )
    return result


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
