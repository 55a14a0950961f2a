import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from confdeficit.domain import build_chart_grid, build_icosphere

settings.register_profile(
    "numeric", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("numeric")


@pytest.fixture(scope="session")
def mesh2():
    return build_icosphere(level=2)


@pytest.fixture(scope="session")
def mesh3():
    return build_icosphere(level=3)


@pytest.fixture(scope="session")
def chart4():
    return build_chart_grid(4, resolution=16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
