import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sddsolve.graph import WeightedGraph

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_connected_graph(n: int, extra: int, seed: int, weights: str = "uniform") -> WeightedGraph:
    """Random spanning tree plus ``extra`` random edges (parallel edges allowed)."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    parents = np.array([perm[rng.integers(0, i)] for i in range(1, n)], dtype=np.int64)
    u = np.concatenate([perm[1:], rng.integers(0, n, extra)])
    v = np.concatenate([parents, rng.integers(0, n, extra)])
    keep = u != v
    u, v = u[keep], v[keep]
    w = rng.uniform(0.5, 5.0, u.size) if weights == "uniform" else np.ones(u.size)
    return WeightedGraph(n, u, v, w)


@pytest.fixture
def triangle():
    return WeightedGraph(3, [0, 1, 0], [1, 2, 2], [1.0, 1.0, 1.0])


@pytest.fixture
def cycle4():
    return WeightedGraph(4, [0, 1, 2, 0], [1, 2, 3, 3], [1.0, 1.0, 1.0, 1.0])


@pytest.fixture
def rand_graph():
    return random_connected_graph


@pytest.fixture
def tmp_files(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write
