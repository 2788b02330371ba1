import numpy as np
import pytest

from tubeseg.data import generate_synthetic_sequence
from tubeseg.model import ModelConfig, init_memory, init_params


@pytest.fixture(scope="session")
def toy_config():
    return ModelConfig.toy(num_classes=3, stuff_count=1, seed=0)


@pytest.fixture(scope="session")
def toy_sequence():
    return generate_synthetic_sequence(
        seed=7, num_frames=2, height=16, width=16, num_things=2, num_stuff=1
    )


@pytest.fixture(scope="session")
def small_sequence():
    return generate_synthetic_sequence(
        seed=11, num_frames=2, height=6, width=6, num_things=1, num_stuff=1
    )


@pytest.fixture()
def toy_params(toy_config):
    return init_params(toy_config)


@pytest.fixture(scope="session")
def toy_layout(toy_config):
    return init_memory(toy_config)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
