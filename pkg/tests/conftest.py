import numpy as np
import pytest

from scaleladder.ladder import linear_bundle, scaled_sinh_bundle, tanh_bundle


@pytest.fixture(scope="session")
def tanh1():
    """tanh bundle on (-1, 1); constants certified once per session."""
    return tanh_bundle(1.0)


@pytest.fixture(scope="session")
def sinh1():
    return scaled_sinh_bundle(1.0, 1.0)


@pytest.fixture(scope="session")
def linear2():
    return linear_bundle(2.0, 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
