import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# solver-backed properties have uneven per-example cost, so no per-example deadline
settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", deadline=None, max_examples=10,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_numpy():
    with np.errstate(over="ignore"), warnings.catch_warnings():
        warnings.simplefilter("default")
        yield
