import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kvnlab.grid import make_grid

settings.register_profile("kvn", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kvn")


@pytest.fixture(scope="session")
def grid128():
    return make_grid(128, 128, (-8, 8), (-8, 8))


@pytest.fixture(scope="session")
def grid64():
    return make_grid(64, 64, (-8, 8), (-8, 8))


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 32, (-8, 8), (-8, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
