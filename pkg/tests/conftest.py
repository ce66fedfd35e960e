import numpy as np
import pytest

from scalepde import make_grid


@pytest.fixture
def grid1d():
    return make_grid(1, 128)


@pytest.fixture
def grid2d():
    return make_grid(2, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
