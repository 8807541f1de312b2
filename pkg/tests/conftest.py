import numpy as np
import pytest

from gabigan.genome import SearchLimits


@pytest.fixture
def limits():
    return SearchLimits()


@pytest.fixture
def tiny_limits():
    return SearchLimits(C=1, D=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
