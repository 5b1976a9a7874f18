import numpy as np
import pytest

from kgbench.miner import MinerConfig, mine
from tests.synthetic import family_graph, make_graph


@pytest.fixture(
    params=[
        100329066,
        998566290,
        271744546,
        159245994,
        267638719,
    ],
    ids=lambda p: f"seed={p}",
)
def random_seed(request):
    np.random.seed(request.param)
    return request.param


@pytest.fixture(scope="session")
def family():
    return family_graph()


@pytest.fixture()
def tiny():
    """r1(a,b), r1(c,d), r2(a,b): confidence and PCA confidence of r1 => r2 differ."""
    return make_graph([("a", "r1", "b"), ("c", "r1", "d"), ("a", "r2", "b")])


@pytest.fixture(scope="session")
def family_rules(family):
    return mine(family, MinerConfig())
