import numpy as np
import pytest

from inertial_kuramoto import FrequencyDistribution, ModelParams, PhaseSpaceGrid


@pytest.fixture
def dirac():
    return FrequencyDistribution.dirac()


@pytest.fixture
def unit_params():
    return ModelParams(1.0, 1.0, 1.0)


@pytest.fixture
def small_grid(unit_params, dirac):
    return PhaseSpaceGrid(16, 64, unit_params, dirac)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
