import mpmath as mp
import pytest
from hypothesis import HealthCheck, settings

from dcapprox import measures

settings.register_profile(
    "dcapprox", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("dcapprox")


@pytest.fixture(autouse=True)
def _test_precision():
    # library routines pick their own precision; this only keeps oracles exact
    with mp.workdps(50):
        yield


def rel(a, b):
    a, b = mp.mpf(a), mp.mpf(b)
    return abs(a - b) / abs(b) if b else abs(a)


@pytest.fixture(scope="session")
def g30():
    return measures.gaussian(1, precision_digits=30)


@pytest.fixture(scope="session")
def lap30():
    return measures.laplace(1, precision_digits=30)


@pytest.fixture(scope="session")
def unif30():
    return measures.uniform(-1, 1, precision_digits=30)
