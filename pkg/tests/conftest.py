import numpy as np
import pytest

from matprod import rademacher, standard_gaussian, uniform_symmetric


@pytest.fixture
def gauss():
    return standard_gaussian()


@pytest.fixture
def rad():
    return rademacher()


@pytest.fixture
def unif():
    return uniform_symmetric()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
