"""Partial Cholesky elimination of low-degree tree vertices."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .graph import WeightedGraph, _project, laplacian_csr
from .trees import SpanningTree, StretchBounds


@dataclass(eq=False)
class CholeskyFactor:
    """Elimination of a tree-plus-extra-edges graph down to a core graph.

    With ``U`` the factor built from the elimination sequence and
    ``P = blockdiag(I, L_reduced)``, the original Laplacian equals
    ``Uᵀ P U``. Vertices of a component with no extra edges are removed
    entirely; the last one of each such component is a *null* vertex
    whose row of ``U`` is the identity and whose entry of ``P`` is 0.

    Attributes
    ----------
    ops : tuple of ndarray
        ``(vertex, pivot, nb1, w1, nb2, w2)``; ``nb2 = -1`` for leaf pivots.
    n_ops : int
    status : ndarray of int8
        0 kept, 1 eliminated, 2 null.
    kept : ndarray
        Surviving vertex ids in increasing order; vertex ``kept[i]`` is
        vertex ``i`` of ``reduced_graph``.
    reduced_graph : WeightedGraph
        Core graph: the contracted tree edges first, then the extra edges.
    n_reduced_tree_edges : int
    reduced_tau : StretchBounds
    reduced_roots : ndarray
        One reduced vertex per reduced component (used for grounding).
    """

    n: int
    ops: tuple
    n_ops: int
    status: np.ndarray
    kept: np.ndarray
    reduced_graph: WeightedGraph
    n_reduced_tree_edges: int
    reduced_tau: StretchBounds
    reduced_roots: np.ndarray
    labels: np.ndarray
    n_components: int

    @property
    def order(self) -> np.ndarray:
        """Vertices in the order they were eliminated."""
        return self.ops[0][: self.n_ops]

    @cached_property
    def reduced_tree(self) -> SpanningTree:
        k = self.n_reduced_tree_edges
        return SpanningTree.from_graph(self.reduced_graph, np.arange(k))

    def forward(self, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply ``U⁻ᵀ``; returns eliminated part and reduced right-hand side."""
        y, work = _kernels.forward_substitute(np.asarray(b, dtype=np.float64), *self.ops, self.n_ops)
        return y, work[self.kept]

    def backward(self, x_reduced: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Apply ``U⁻¹`` to ``(y, x_reduced)`` and return zero-mean potentials."""
        x = np.zeros(self.n)
        x[self.kept] = x_reduced
        x = _kernels.backward_substitute(x, y, *self.ops, self.n_ops)
        return _project(x, self.labels, self.n_components)

    def u_matrix(self) -> sp.csr_matrix:
        """The factor ``U`` as a sparse matrix (testing aid)."""
        vert, piv, nb1, w1, nb2, w2 = (a[: self.n_ops] for a in self.ops)
        s = np.sqrt(piv)
        rest = np.flatnonzero(self.status != 1)
        has2 = nb2 >= 0
        rows = np.concatenate([vert, vert, vert[has2], rest])
        cols = np.concatenate([vert, nb1, nb2[has2], rest])
        vals = np.concatenate([s, -w1 / s, -w2[has2] / s[has2], np.ones(rest.size)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def p_matrix(self) -> sp.csr_matrix:
        """``blockdiag(I, L_reduced)`` in original vertex numbering (testing aid)."""
        g = self.reduced_graph
        lred = laplacian_csr(g.n_vertices, g.u, g.v, g.w).tocoo()
        elim = self.order
        rows = np.concatenate([elim, self.kept[lred.row]])
        cols = np.concatenate([elim, self.kept[lred.col]])
        vals = np.concatenate([np.ones(elim.size), lred.data])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))


def eliminate_arrays(t: SpanningTree, tree_weights: np.ndarray, off_u: np.ndarray,
                     off_v: np.ndarray, off_w: np.ndarray, off_tau: np.ndarray) -> CholeskyFactor:
    """Eliminate with the tree structure of ``t`` and explicit weights/extra edges."""
    n = t.n_vertices
    terminal = np.zeros(n, dtype=np.bool_)
    terminal[off_u] = True
    terminal[off_v] = True
    (vert, piv, nb1, w1, nb2, w2, n_ops, parent, pw, status, _) = _kernels.eliminate_tree(
        n, t.indptr, t.indices, t.slot_edge, np.asarray(tree_weights, dtype=np.float64), terminal)
    kept = np.flatnonzero(status == 0)
    newid = np.full(n, -1, dtype=np.int64)
    newid[kept] = np.arange(kept.size)
    pk = parent[kept]
    child = kept[pk >= 0]
    ru = np.concatenate([newid[child], newid[off_u]])
    rv = np.concatenate([newid[parent[child]], newid[off_v]])
    rw = np.concatenate([pw[child], off_w])
    k = child.size
    red = WeightedGraph(kept.size, ru, rv, rw, _trusted=True)
    tau = StretchBounds(np.arange(k, k + off_u.size), np.asarray(off_tau, dtype=np.float64))
    roots = newid[kept[pk < 0]]
    return CholeskyFactor(n, (vert, piv, nb1, w1, nb2, w2), int(n_ops), status, kept, red, k, tau,
                          roots, t.component_labels, t.n_components)


def greedy_eliminate(h: WeightedGraph, t: SpanningTree, tau: StretchBounds | None = None) -> CholeskyFactor:
    """Pivot out tree vertices of degree one and two not touched by off-tree edges.

    Parameters
    ----------
    h : WeightedGraph
    t : SpanningTree
        Spanning tree of ``h`` (its ``edge_ids`` index ``h``'s edges).
    tau : StretchBounds, optional
        Bounds carried over to the reduced graph's off-tree edges; when
        omitted every off-tree edge of ``h`` is used with bound 0.
    """
    if t.n_vertices != h.n_vertices or t.n_graph_edges != h.n_edges:
        raise ValueError("tree does not belong to this graph")
    if tau is None:
        off = t.off_tree_ids()
        values = np.zeros(off.size)
    else:
        off, values = np.asarray(tau.edge_ids, dtype=np.int64), tau.values
    return eliminate_arrays(t, h.w[t.edge_ids], h.u[off], h.v[off], h.w[off], values)


def apply_factor_solve(f: CholeskyFactor, inner, b, eps: float) -> np.ndarray:
    """Solve with ``Uᵀ P U`` using ``inner(rhs, eps)`` for the reduced block."""
    y, rhs = f.forward(b)
    if f.kept.size:
        x_red = np.asarray(inner(rhs, eps), dtype=np.float64)
    else:
        x_red = np.zeros(0)
    return f.backward(x_red, y)
