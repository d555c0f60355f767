"""Spanning trees, stretch computation and linear-time tree solves."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra, minimum_spanning_tree

from . import _kernels
from .graph import WeightedGraph, _project


class SpanningTree:
    """A rooted spanning forest of a graph.

    Tree edges are indexed ``0..k-1``; ``edge_ids[k]`` is the id of that
    edge in the source graph. Each component is rooted at its smallest
    vertex.

    Attributes
    ----------
    parent : ndarray
        Parent vertex, -1 at roots.
    parent_edge : ndarray
        Tree-edge index of the edge to the parent, -1 at roots.
    order : ndarray
        Breadth-first order, parents before children.
    root_of : ndarray
        Root of each vertex's component.
    """

    def __init__(self, n_vertices: int, n_graph_edges: int, edge_ids, u, v, weights):
        self.n_vertices = int(n_vertices)
        self.n_graph_edges = int(n_graph_edges)
        self.edge_ids = np.asarray(edge_ids, dtype=np.int64)
        self.u = np.asarray(u, dtype=np.int64)
        self.v = np.asarray(v, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        n, k = self.n_vertices, self.edge_ids.shape[0]
        slots = np.concatenate([self.u, self.v])
        nbrs = np.concatenate([self.v, self.u])
        tid = np.concatenate([np.arange(k), np.arange(k)])
        perm = np.argsort(slots, kind="stable")
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(slots, minlength=n))]).astype(np.int64)
        self.indices = nbrs[perm]
        self.slot_edge = tid[perm]
        order, parent, pedge, root_of = _kernels.bfs_forest(
            n, self.indptr, self.indices, self.slot_edge, np.arange(n, dtype=np.int64))
        n_roots = int(np.count_nonzero(parent < 0))
        if n_roots != n - k:
            raise ValueError("tree edges contain a cycle")
        self.order, self.parent, self.parent_edge, self.root_of = order, parent, pedge, root_of
        self.n_components = n_roots

    @classmethod
    def from_graph(cls, g: WeightedGraph, edge_ids) -> "SpanningTree":
        """Tree on the graph edges ``edge_ids``; checks that it spans ``g``."""
        ids = np.unique(np.asarray(edge_ids, dtype=np.int64))
        if ids.size and (ids[0] < 0 or ids[-1] >= g.n_edges):
            raise ValueError("tree edge id out of range")
        t = cls(g.n_vertices, g.n_edges, ids, g.u[ids], g.v[ids], g.w[ids])
        if t.n_components != g.components[0]:
            raise ValueError("tree does not span the graph")
        return t

    def with_weights(self, weights) -> "SpanningTree":
        """Same structure with new tree-edge weights."""
        t = object.__new__(SpanningTree)
        t.__dict__.update({k: v for k, v in self.__dict__.items()
                           if k not in ("parent_weight", "resistance_to_root")})
        t.weights = np.asarray(weights, dtype=np.float64)
        return t

    @property
    def n_tree_edges(self) -> int:
        return int(self.edge_ids.shape[0])

    @cached_property
    def parent_weight(self) -> np.ndarray:
        pw = np.zeros(self.n_vertices)
        nz = self.parent_edge >= 0
        pw[nz] = self.weights[self.parent_edge[nz]]
        return pw

    @cached_property
    def component_labels(self) -> np.ndarray:
        return np.unique(self.root_of, return_inverse=True)[1].astype(np.int64)

    @cached_property
    def depth(self) -> np.ndarray:
        d = np.zeros(self.n_vertices, dtype=np.int64)
        for v in self.order:
            p = self.parent[v]
            if p >= 0:
                d[v] = d[p] + 1
        return d

    @cached_property
    def resistance_to_root(self) -> np.ndarray:
        """Sum of inverse weights along each vertex's path to its root."""
        inv = np.zeros(self.n_vertices)
        nz = self.parent_edge >= 0
        inv[nz] = 1.0 / self.parent_weight[nz]
        return _kernels.potentials_from_sums(self.order, self.parent, np.ones(self.n_vertices), inv)

    @cached_property
    def ancestors(self) -> np.ndarray:
        """Binary-lifting table: ``ancestors[j, v]`` is the 2^j-th ancestor (roots map to themselves)."""
        up0 = np.where(self.parent >= 0, self.parent, np.arange(self.n_vertices))
        levels = max(1, int(self.depth.max(initial=0)).bit_length())
        table = np.empty((levels, self.n_vertices), dtype=np.int64)
        table[0] = up0
        for j in range(1, levels):
            table[j] = table[j - 1][table[j - 1]]
        return table

    def lca(self, a, b) -> np.ndarray:
        """Lowest common ancestors for vertex arrays in the same component."""
        a = np.array(a, dtype=np.int64)
        b = np.array(b, dtype=np.int64)
        depth, up = self.depth, self.ancestors
        swap = depth[a] < depth[b]
        a[swap], b[swap] = b[swap], a[swap].copy()
        diff = depth[a] - depth[b]
        for j in range(up.shape[0]):
            sel = (diff >> j) & 1 == 1
            a[sel] = up[j][a[sel]]
        for j in range(up.shape[0] - 1, -1, -1):
            ua, ub = up[j][a], up[j][b]
            sel = ua != ub
            a[sel], b[sel] = ua[sel], ub[sel]
        return np.where(a == b, a, up[0][a])

    def off_tree_ids(self) -> np.ndarray:
        mask = np.ones(self.n_graph_edges, dtype=bool)
        mask[self.edge_ids] = False
        return np.flatnonzero(mask)

    def __repr__(self) -> str:
        return f"SpanningTree(n_vertices={self.n_vertices}, n_tree_edges={self.n_tree_edges})"


@dataclass(frozen=True, eq=False)
class StretchBounds:
    """Upper bounds on the stretch of off-tree edges.

    ``edge_ids`` are graph edge ids (ascending); tree edges are not
    listed and implicitly carry bound 1.
    """

    edge_ids: np.ndarray
    values: np.ndarray

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def __len__(self) -> int:
        return int(self.edge_ids.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, StretchBounds):
            return NotImplemented
        return np.array_equal(self.edge_ids, other.edge_ids) and np.array_equal(self.values, other.values)

    __hash__ = None


def compute_stretch(g: WeightedGraph, t: SpanningTree) -> StretchBounds:
    """Exact stretch of every off-tree edge.

    For ``e = (u, v, w)`` this is ``w`` times the total resistance of
    the tree path from ``u`` to ``v``, found through the lowest common
    ancestor and root-path resistances.
    """
    if t.n_vertices != g.n_vertices or t.n_graph_edges != g.n_edges:
        raise ValueError("tree does not belong to this graph")
    off = t.off_tree_ids()
    u, v = g.u[off], g.v[off]
    if np.any(t.root_of[u] != t.root_of[v]):
        raise ValueError("tree does not span the graph")
    return StretchBounds(off, g.w[off] * path_resistance(t, u, v))


def path_resistance(t: SpanningTree, u, v) -> np.ndarray:
    """Resistance of the tree path between paired vertices."""
    res = t.resistance_to_root
    anc = t.lca(u, v)
    return np.maximum(res[u] + res[v] - 2.0 * res[anc], 0.0)


def lp_stretch_norm(tau, p: float) -> float:
    """Sum of ``tau_e ** p``."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must lie in (0, 1], got {p}")
    values = tau.values if isinstance(tau, StretchBounds) else np.asarray(tau, dtype=np.float64)
    if values.size and values.min() < 0:
        raise ValueError("stretch bounds must be non-negative")
    return float(np.sum(values ** p))


def scale_tree(g: WeightedGraph, t: SpanningTree, tau: StretchBounds, kappa: float):
    """Multiply tree weights by ``kappa`` and divide the stretch bounds by it."""
    if not kappa >= 1.0:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if kappa == 1.0:
        return g, t, tau
    w = np.array(g.w)
    w[t.edge_ids] *= kappa
    g2 = WeightedGraph(g.n_vertices, g.u, g.v, w)
    return g2, t.with_weights(t.weights * kappa), StretchBounds(tau.edge_ids, tau.values / kappa)


def tree_solve(t: SpanningTree, b, rtol: float = 1e-9) -> np.ndarray:
    """Solve ``L_T x = b`` exactly; returns the zero-mean solution per component."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (t.n_vertices,):
        raise ValueError(f"dimension mismatch: expected ({t.n_vertices},), got {b.shape}")
    sums = subtree_demand(t, b, rtol)
    x = _kernels.potentials_from_sums(t.order, t.parent, t.parent_weight, sums)
    return _project(x, t.component_labels, t.n_components)


def subtree_demand(t: SpanningTree, b: np.ndarray, rtol: float = 1e-9, scale: float | None = None) -> np.ndarray:
    """Subtree sums of ``b``; raises if a component does not sum to zero."""
    sums = _kernels.subtree_sums(t.order, t.parent, b)
    roots = np.flatnonzero(t.parent < 0)
    ref = float(np.abs(b).sum()) if scale is None else scale
    worst = float(np.abs(sums[roots]).max(initial=0.0))
    if worst > rtol * max(ref, np.finfo(float).tiny):
        raise ValueError(f"right-hand side is inconsistent: component sum {worst:.3e}")
    return sums


def _min_edge_per_pair(a: np.ndarray, b: np.ndarray, length: np.ndarray, n: int):
    """Deduplicate parallel pairs, keeping the shortest. Returns (keys, index into inputs)."""
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys = lo * n + hi
    order = np.lexsort((length, keys))
    k = keys[order]
    first = np.ones(k.shape[0], dtype=bool)
    first[1:] = k[1:] != k[:-1]
    return k[first], order[first]


def _mst_tree_ids(g: WeightedGraph) -> np.ndarray:
    n = g.n_vertices
    length = 1.0 / g.w
    keys, idx = _min_edge_per_pair(g.u, g.v, length, n)
    lo, hi = keys // n, keys % n
    mat = sp.csr_matrix((length[idx], (lo, hi)), shape=(n, n))
    tree = minimum_spanning_tree(mat).tocoo()
    tk = np.minimum(tree.row, tree.col).astype(np.int64) * n + np.maximum(tree.row, tree.col)
    return idx[np.searchsorted(keys, tk)]


def _shifted_cluster_tree_ids(g: WeightedGraph, rng: np.random.Generator,
                              growth: float, radius_factor: float) -> np.ndarray:
    """Tree from repeated clustering with exponentially shifted start times.

    In each round, edges no longer than a length scale ``lam`` are
    active. Every current cluster starts a shortest-path search after a
    random exponential delay; each cluster joins whichever search reaches
    it first, adding the edge it was reached through. Clusters are then
    contracted and ``lam`` grows geometrically.
    """
    n = g.n_vertices
    length = 1.0 / g.w
    cluster = np.arange(n)
    tree: list[np.ndarray] = []
    lam = float(length.min()) if length.size else 1.0
    while True:
        cu, cv = cluster[g.u], cluster[g.v]
        inter = np.flatnonzero(cu != cv)
        if inter.size == 0:
            break
        labels, rel = np.unique(cluster, return_inverse=True)
        nc = labels.shape[0]
        le = length[inter]
        lam = max(lam, float(le.min()))
        active = le <= lam
        eid = inter[active]
        au, av, al = rel[g.u[eid]], rel[g.v[eid]], le[active]
        keys, pick = _min_edge_per_pair(au, av, al, nc)
        lo, hi, pl = keys // nc, keys % nc, al[pick]
        beta = np.log(nc + 1.0) / (radius_factor * lam)
        shift = rng.exponential(1.0 / beta, nc)
        rows = np.concatenate([lo, hi, np.full(nc, nc)])
        cols = np.concatenate([hi, lo, np.arange(nc)])
        data = np.concatenate([pl, pl, shift.max() - shift + 1e-12 * lam])
        mat = sp.csr_matrix((data, (rows, cols)), shape=(nc + 1, nc + 1))
        _, pred = dijkstra(mat, directed=True, indices=nc, return_predecessors=True)
        pred = pred[:nc].astype(np.int64)
        joined = np.flatnonzero(pred != nc)
        pk = np.minimum(pred[joined], joined) * nc + np.maximum(pred[joined], joined)
        tree.append(eid[pick[np.searchsorted(keys, pk)]])
        center = np.where(pred == nc, np.arange(nc), pred)
        while True:
            nxt = center[center]
            if np.array_equal(nxt, center):
                break
            center = nxt
        cluster = labels[center[rel]]
        lam *= growth
    return np.concatenate(tree) if tree else np.zeros(0, dtype=np.int64)


def low_stretch_tree(g: WeightedGraph, seed: int | None = 0, method: str = "lsst", *,
                     growth: float = 4.0, radius_factor: float = 1.0) -> SpanningTree:
    """Spanning forest aimed at small total stretch.

    Parameters
    ----------
    g : WeightedGraph
    seed : int, optional
        Seed for the random cluster delays.
    method : {"lsst", "mst"}
        ``"lsst"`` uses randomized cluster contraction; ``"mst"`` returns
        the minimum-resistance spanning tree.
    growth : float
        Factor by which the active length scale grows per round.
    radius_factor : float
        Scales the expected cluster radius relative to the length scale.
    """
    if method == "mst":
        ids = _mst_tree_ids(g)
    elif method == "lsst":
        ids = _shifted_cluster_tree_ids(g, np.random.default_rng(seed), growth, radius_factor)
    else:
        raise ValueError(f"unknown tree method {method!r}")
    return SpanningTree.from_graph(g, ids)
