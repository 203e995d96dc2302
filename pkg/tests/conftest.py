import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparsekam.basis import precompute_maps

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def plan16():
    """Small plan for fast unit tests."""
    return precompute_maps(16, c=0.5, L=4, R_support=16.0)


@pytest.fixture(scope="session")
def plan32():
    return precompute_maps(32, c=0.5, L=6, R_support=32.0)
