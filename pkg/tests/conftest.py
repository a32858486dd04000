import numpy as np
import pytest

from scoremem.datasets import gaussian2d, symmetric2
from scoremem.schedules import Schedule


@pytest.fixture(scope="session")
def data20():
    return gaussian2d(20, seed=0)


@pytest.fixture(scope="session")
def sym2():
    return symmetric2()


@pytest.fixture(scope="session")
def ve():
    return Schedule.ve("exp10")


@pytest.fixture(scope="session")
def vp():
    return Schedule.vp("linear")


@pytest.fixture(params=["ve", "vp"])
def schedule(request):
    return Schedule.ve("exp10") if request.param == "ve" else Schedule.vp("linear")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
