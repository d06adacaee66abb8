import numpy as np
import pytest

from cpcanet.tensor import set_default_dtype


@pytest.fixture(autouse=True)
def float64_default():
    """Verification default is float64; tests that need f32 switch locally
    and this restores the default afterwards."""
    set_default_dtype("f64")
    yield
    set_default_dtype("f64")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
