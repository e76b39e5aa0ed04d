import numpy as np
import pytest

from unjam.scenarios import builtin

ROAD_BUILTINS = ("intersection", "lane_deadlock", "traffic_deadlock")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=ROAD_BUILTINS)
def road_scenario(request):
    return builtin(request.param)
