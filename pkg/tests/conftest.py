import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hjlab.kernels import available_backends

settings.register_profile("hjlab", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("hjlab")


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
