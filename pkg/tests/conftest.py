import numpy as np
import pytest

from rectgpr import normalize_features, synth_function


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def wells3d():
    return normalize_features(synth_function("gaussian_wells", 3, 200, 0))
