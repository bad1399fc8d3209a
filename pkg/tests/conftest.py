import numpy as np
import pytest

from bregsel.cli import bundled_dataset


@pytest.fixture(scope="session")
def bearings():
    return bundled_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
