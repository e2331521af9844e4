import numpy as np
import pytest

from feedsim import graph


def make_network(edges, core=None):
    """Build a Network from explicit (follower, followee) pairs."""
    adj = {}
    nodes = set()
    for u, v in edges:
        assert u != v
        nodes.add(u)
        nodes.add(v)
        adj.setdefault(u, set()).add(v)
    core_set = frozenset(core) if core is not None else None
    return graph._build_network(adj, nodes, core_set)


@pytest.fixture
def small_net():
    # 0 follows 1,2; 1 follows 2,3; 2 follows 3; 4 follows 0
    return make_network([(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (4, 0)], core=[0, 1, 2, 4])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
