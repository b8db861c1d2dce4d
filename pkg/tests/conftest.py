import numpy as np
import pytest

from synthface.desk import desk_assets


@pytest.fixture(scope="session")
def assets():
    return desk_assets()


@pytest.fixture(scope="session")
def rig(assets):
    return assets.rig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
