import numpy as np
import pytest

from active_lab.geometry import DataDistribution, RandomSource
from active_lab.oracle import SingleHypothesisOracle, TncParams


@pytest.fixture
def rng():
    return RandomSource(20240611)


@pytest.fixture
def params():
    return TncParams(alpha=0.5, mu0=0.25)


@pytest.fixture
def disk():
    return DataDistribution.uniform_ball(2)


@pytest.fixture
def oracle2d(params):
    return SingleHypothesisOracle(np.array([1.0, 0.0]), params)


def polar(theta):
    return np.array([np.cos(theta), np.sin(theta)])
