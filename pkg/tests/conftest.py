import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stitch.model import build_adapter
from stitch.poseval import default_vocab

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def small_adapter():
    return build_adapter("toy-small", seed=11)


@pytest.fixture(scope="session")
def vocab():
    return default_vocab()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
