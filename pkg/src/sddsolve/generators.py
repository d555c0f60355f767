"""Synthetic graph families used in tests, demos and benchmarks."""
from __future__ import annotations

import networkx as nx
import numpy as np

from .graph import WeightedGraph


def _weights(rng: np.random.Generator, m: int, weights: str | tuple) -> np.ndarray:
    if weights == "unit":
        return np.ones(m)
    if weights == "uniform":
        return rng.uniform(1.0, 10.0, m)
    if weights == "lognormal":
        return rng.lognormal(0.0, 1.0, m)
    if isinstance(weights, tuple):
        lo, hi = weights
        return rng.uniform(lo, hi, m)
    raise ValueError(f"unknown weight distribution {weights!r}")


def grid2d(rows: int, cols: int | None = None, *, weights="unit", seed: int = 0) -> WeightedGraph:
    """``rows × cols`` grid; vertex ``(i, j)`` is ``i · cols + j``."""
    cols = rows if cols is None else cols
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    idx = np.arange(rows * cols).reshape(rows, cols)
    u = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    v = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    rng = np.random.default_rng(seed)
    return WeightedGraph(rows * cols, u, v, _weights(rng, u.size, weights))


def _nx_seed(seed) -> int:
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def _connected_draw(make, seed: int, tries: int = 100):
    """Redraw with derived seeds until the graph is connected."""
    for k in range(tries):
        h = make(seed if k == 0 else [seed, k])
        if h.number_of_nodes() == 0 or nx.is_connected(h):
            return h
    raise ValueError(f"no connected graph after {tries} draws; parameters too sparse")


def random_regular(n: int, degree: int = 3, *, weights="unit", seed: int = 0) -> WeightedGraph:
    """Connected random ``degree``-regular graph."""
    if degree < 1 or degree >= n or (n * degree) % 2:
        raise ValueError(f"no {degree}-regular graph on {n} vertices")
    h = _connected_draw(lambda s: nx.random_regular_graph(degree, n, seed=_nx_seed(s)), seed)
    e = np.array(sorted((min(a, b), max(a, b)) for a, b in h.edges()), dtype=np.int64).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    return WeightedGraph(n, e[:, 0], e[:, 1], _weights(rng, e.shape[0], weights))


def erdos_renyi(n: int, prob: float, *, weights="unit", seed: int = 0,
                connected: bool = True) -> WeightedGraph:
    """G(n, p) graph, redrawn until connected unless ``connected=False``."""
    if n < 1 or not (0.0 <= prob <= 1.0):
        raise ValueError("need n >= 1 and 0 <= prob <= 1")
    make = lambda s: nx.fast_gnp_random_graph(n, prob, seed=_nx_seed(s))
    h = _connected_draw(make, seed) if connected else make(seed)
    e = np.array(sorted(h.edges()), dtype=np.int64).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    return WeightedGraph(n, e[:, 0], e[:, 1], _weights(rng, e.shape[0], weights))


def barbell(clique: int, path: int = 0, *, weights="unit", seed: int = 0) -> WeightedGraph:
    """Two cliques joined by a path of ``path`` extra vertices."""
    if clique < 2 or path < 0:
        raise ValueError("barbell needs clique >= 2 and path >= 0")
    h = nx.barbell_graph(clique, path)
    e = np.array(sorted((min(a, b), max(a, b)) for a, b in h.edges()), dtype=np.int64)
    rng = np.random.default_rng(seed)
    return WeightedGraph(h.number_of_nodes(), e[:, 0], e[:, 1], _weights(rng, e.shape[0], weights))


def path_plus_random_chords(n: int, chords: int, *, weights="uniform", seed: int = 0) -> WeightedGraph:
    """Path ``0-1-...-(n-1)`` plus ``chords`` random extra edges (no self loops)."""
    if n < 2:
        raise ValueError("need at least two vertices")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, n, chords)
    b = rng.integers(0, n - 1, chords)
    b = b + (b >= a)
    u = np.concatenate([np.arange(n - 1), np.minimum(a, b)])
    v = np.concatenate([np.arange(1, n), np.maximum(a, b)])
    return WeightedGraph(n, u, v, _weights(rng, u.size, weights))


FAMILIES = {
    "grid2d": grid2d,
    "random_regular": random_regular,
    "erdos_renyi": erdos_renyi,
    "barbell": barbell,
    "path_plus_random_chords": path_plus_random_chords,
}


def generate(kind: str, *params, seed: int = 0, **options) -> WeightedGraph:
    """Build a graph of family ``kind``; deterministic in ``(kind, params, seed)``."""
    if kind not in FAMILIES:
        raise ValueError(f"unknown graph family {kind!r}; choose from {sorted(FAMILIES)}")
    return FAMILIES[kind](*params, seed=seed, **options)
