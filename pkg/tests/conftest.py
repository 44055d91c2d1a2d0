import numpy as np
import pytest

from bbaudit import geo


@pytest.fixture
def grid():
    return geo.GridConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
