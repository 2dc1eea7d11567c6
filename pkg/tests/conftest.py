"""Shared fixtures: small random images and a tiny trained scenario."""

import numpy as np
import pytest

from smoothdef.attacks import PgdSpec, generate_attack_set
from smoothdef.classifier import TrainConfig, train
from smoothdef.dataset import make_synthetic_dataset
from smoothdef.harness import AttackSet
from smoothdef.image import Image


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def gray_image(rng):
    return Image(rng.uniform(0.0, 1.0, (16, 16, 1)))


@pytest.fixture
def color_image(rng):
    return Image(rng.uniform(0.0, 1.0, (12, 12, 3)))


@pytest.fixture(scope="session")
def tiny_model():
    """Small trained model on a 120-sample digit corpus; fast but non-trivial."""
    data = make_synthetic_dataset(120, 7)
    return train(data, TrainConfig(epochs=3, seed=7))


@pytest.fixture(scope="session")
def tiny_test_set():
    return make_synthetic_dataset(40, 10_007, "test")


@pytest.fixture(scope="session")
def tiny_attack_dir(tiny_model, tiny_test_set, tmp_path_factory):
    out = tmp_path_factory.mktemp("attack")
    spec = PgdSpec(epsilon=0.1, iterations=5, step_size=0.02)
    generate_attack_set(tiny_model, tiny_test_set, spec, out)
    return out


@pytest.fixture(scope="session")
def tiny_attack_set(tiny_attack_dir):
    return AttackSet.load(tiny_attack_dir)
