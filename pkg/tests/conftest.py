import os

import numpy as np
import pytest
from hypothesis import settings

from adpdd import build_problem
from adpdd.graph import path_graph
from adpdd.problem import QuadraticFunction

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def two_agent_problem(c=(1.0, 3.0)):
    """f_i = (x - c_i)^2 on a single edge; consensus optimum mean(c)."""
    return build_problem([QuadraticFunction([[2.0]], [-2.0 * ci], ci * ci) for ci in c])


@pytest.fixture
def two_agent():
    return two_agent_problem(), path_graph(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
