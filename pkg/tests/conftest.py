import numpy as np
import pytest

from spinoc.wigner import PhaseGrid


@pytest.fixture
def tiny_grid():
    return PhaseGrid(n_x=8, n_p=8, x0=-3.0, lx=6.0, p0=-3.0, lp=6.0)


@pytest.fixture
def mid_grid():
    return PhaseGrid(n_x=64, n_p=64, x0=-5.0, lx=10.0, p0=-5.0, lp=10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
