"""Weighted graphs, Laplacians, incidence data and dense test oracles."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class WeightedGraph:
    """Undirected multigraph with positive edge weights.

    Parallel edges are kept as separate terms. Instances are immutable.

    Parameters
    ----------
    n_vertices : int
    u, v : array_like of int
        Edge endpoints, 0-indexed.
    w : array_like of float
        Strictly positive finite weights.
    """

    __slots__ = ("n_vertices", "u", "v", "w", "__dict__")

    def __init__(self, n_vertices: int, u, v, w, *, _trusted: bool = False):
        self.n_vertices = int(n_vertices)
        if _trusted:
            self.u, self.v, self.w = u, v, w
            return
        u = np.asarray(u, dtype=np.int64).reshape(-1)
        v = np.asarray(v, dtype=np.int64).reshape(-1)
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if not (u.shape == v.shape == w.shape):
            raise ValueError("u, v and w must have the same length")
        if self.n_vertices < 0:
            raise ValueError("n_vertices must be non-negative")
        if u.size:
            if u.min() < 0 or v.min() < 0 or max(u.max(), v.max()) >= self.n_vertices:
                raise ValueError("edge endpoint out of range")
            loops = np.flatnonzero(u == v)
            if loops.size:
                raise ValueError(f"self-loop at edge {loops[0]}")
            bad = np.flatnonzero(~(np.isfinite(w) & (w > 0)))
            if bad.size:
                raise ValueError(f"edge {bad[0]} has non-positive or non-finite weight {w[bad[0]]}")
        self.u, self.v, self.w = _frozen(u), _frozen(v), _frozen(w)

    @classmethod
    def from_edges(cls, n_vertices: int, edges: Iterable[tuple[int, int, float]]) -> "WeightedGraph":
        edges = list(edges)
        if not edges:
            return cls(n_vertices, [], [], [])
        u, v, w = zip(*edges)
        return cls(n_vertices, u, v, w)

    @property
    def n_edges(self) -> int:
        return int(self.u.shape[0])

    m = n_edges

    def edges(self):
        """Iterate ``(u, v, w)`` triples in input order."""
        return zip(self.u.tolist(), self.v.tolist(), self.w.tolist())

    def with_weights(self, w) -> "WeightedGraph":
        return WeightedGraph(self.n_vertices, self.u, self.v, w)

    def subgraph(self, edge_ids) -> "WeightedGraph":
        ids = np.asarray(edge_ids, dtype=np.int64)
        return WeightedGraph(self.n_vertices, self.u[ids], self.v[ids], self.w[ids], _trusted=True)

    @cached_property
    def components(self) -> tuple[int, np.ndarray]:
        """Number of connected components and the label of each vertex."""
        n = self.n_vertices
        adj = sp.coo_matrix((np.ones(self.n_edges), (self.u, self.v)), shape=(n, n)).tocsr()
        count, labels = connected_components(adj, directed=False)
        return int(count), labels.astype(np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return (self.n_vertices == other.n_vertices and np.array_equal(self.u, other.u)
                and np.array_equal(self.v, other.v) and np.array_equal(self.w, other.w))

    __hash__ = None

    def __repr__(self) -> str:
        return f"WeightedGraph(n_vertices={self.n_vertices}, n_edges={self.n_edges})"


def laplacian_csr(n: int, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> sp.csr_matrix:
    """Sparse Laplacian assembled from edge arrays (duplicates summed)."""
    deg = np.bincount(u, weights=w, minlength=n) + np.bincount(v, weights=w, minlength=n)
    diag = np.arange(n)
    rows = np.concatenate([u, v, diag])
    cols = np.concatenate([v, u, diag])
    vals = np.concatenate([-w, -w, deg])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class LaplacianMatrix:
    """Graph Laplacian with its edge decomposition.

    ``matrix`` is the assembled CSR form used by the solvers. Products
    through :func:`apply` go through the incidence form instead, so that
    constant vectors on a component map to exactly zero.
    """

    def __init__(self, graph: WeightedGraph):
        self.graph = graph
        self.matrix = laplacian_csr(graph.n_vertices, graph.u, graph.v, graph.w)

    @property
    def n(self) -> int:
        return self.graph.n_vertices

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def components(self) -> tuple[int, np.ndarray]:
        return self.graph.components

    def terms(self):
        """Iterate the rank-one terms as ``(u, v, w)``; term is w·χχᵀ with χ = e_u − e_v."""
        return self.graph.edges()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, x):
        return apply(self, x)

    def __repr__(self) -> str:
        return f"LaplacianMatrix(n={self.n}, n_edges={self.graph.n_edges})"


def laplacian_of(g: WeightedGraph) -> LaplacianMatrix:
    """Laplacian of ``g``: weighted degrees on the diagonal, minus weights off it."""
    return LaplacianMatrix(g)


def apply(lap, x) -> np.ndarray:
    """Product ``L x`` evaluated edge by edge (accepts a Laplacian or its graph)."""
    x = np.asarray(x, dtype=np.float64)
    g = lap if isinstance(lap, WeightedGraph) else lap.graph
    if x.shape != (g.n_vertices,):
        raise ValueError(f"dimension mismatch: expected ({g.n_vertices},), got {x.shape}")
    flow = g.w * (x[g.u] - x[g.v])
    n = g.n_vertices
    return np.bincount(g.u, weights=flow, minlength=n) - np.bincount(g.v, weights=flow, minlength=n)


def matvec(a, x: np.ndarray) -> np.ndarray:
    """Product with a LaplacianMatrix, sparse matrix or dense array."""
    if isinstance(a, LaplacianMatrix):
        return a.matrix @ x
    return a @ x


def quadratic_form(a, x: np.ndarray) -> float:
    """``xᵀ A x``; for Laplacians computed as a sum of squares."""
    if isinstance(a, LaplacianMatrix):
        g = a.graph
        diff = x[g.u] - x[g.v]
        return float(np.dot(g.w, diff * diff))
    return float(np.dot(x, a @ x))


def laplacian_norm(lap, x) -> float:
    """Energy norm ``sqrt(xᵀ L x)``.

    Tiny negative round-off (above ``-1e-12·‖x‖²``) is clamped to zero;
    anything more negative means the matrix is not PSD and raises.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (lap.shape[0],):
        raise ValueError(f"dimension mismatch: expected ({lap.shape[0]},), got {x.shape}")
    q = quadratic_form(lap, x)
    if q < 0:
        if q < -1e-12 * float(np.dot(x, x)):
            raise ValueError(f"negative quadratic form {q:.3e}; matrix is not positive semidefinite")
        return 0.0
    return float(np.sqrt(q))


def project_range(lap, b) -> np.ndarray:
    """Subtract the per-component mean so ``b`` lies in the Laplacian's range."""
    b = np.asarray(b, dtype=np.float64)
    count, labels = lap.components
    if b.shape != labels.shape:
        raise ValueError(f"dimension mismatch: expected {labels.shape}, got {b.shape}")
    return _project(b, labels, count)


def _project(b: np.ndarray, labels: np.ndarray, count: int) -> np.ndarray:
    if count == 1:
        return b - b.mean() if b.size else b.copy()
    sums = np.bincount(labels, weights=b, minlength=count)
    sizes = np.bincount(labels, minlength=count)
    return b - (sums / sizes)[labels]


@dataclass(frozen=True)
class IncidenceData:
    """Signed edge-vertex incidence ``B`` and edge resistances.

    Row ``e`` has +1 at ``min(u, v)`` and -1 at ``max(u, v)``, so a
    positive flow runs from the lower id to the higher one.
    """

    B: sp.csr_matrix
    resistance: np.ndarray


def incidence(g: WeightedGraph) -> IncidenceData:
    lo = np.minimum(g.u, g.v)
    hi = np.maximum(g.u, g.v)
    m = g.n_edges
    rows = np.repeat(np.arange(m), 2)
    cols = np.column_stack([lo, hi]).reshape(-1)
    vals = np.tile([1.0, -1.0], m)
    B = sp.csr_matrix((vals, (rows, cols)), shape=(m, g.n_vertices))
    return IncidenceData(B=B, resistance=1.0 / g.w)


@dataclass(frozen=True)
class SDDReduction:
    """A doubled Laplacian standing in for an SDD matrix.

    ``forward`` maps a right-hand side of the SDD system to the doubled
    system; ``backward`` maps a doubled solution back.
    """

    laplacian: LaplacianMatrix
    n_original: int

    @property
    def graph(self) -> WeightedGraph:
        return self.laplacian.graph

    def forward(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        return np.concatenate([b, -b])

    def backward(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        n = self.n_original
        return 0.5 * (z[:n] - z[n:])


def sdd_to_laplacian(m, *, tol: float = 1e-12) -> SDDReduction:
    """Reduce a symmetric diagonally dominant matrix to a Laplacian of twice the size.

    Vertex ``i`` has a mirror ``i + n``. A negative off-diagonal entry
    links ``i``–``j`` and ``i'``–``j'``, a positive one links ``i``–``j'``
    and ``i'``–``j``, and excess diagonal ``d`` links ``i``–``i'`` with
    weight ``d / 2``. For ``b`` the doubled system has right-hand side
    ``(b, -b)`` and the solution ``x = (z₁ - z₂) / 2``.

    Raises
    ------
    ValueError
        If the matrix is not square, not symmetric, has a negative
        diagonal entry or a row that is not diagonally dominant.
    """
    a = sp.csr_matrix(m, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"matrix must be square, got {a.shape}")
    scale = float(abs(a).max()) if a.nnz else 0.0
    asym = abs(a - a.T).tocsr()
    if asym.nnz and asym.max() > tol * max(scale, 1.0):
        row = int(asym.tocoo().row[np.argmax(asym.tocoo().data)])
        raise ValueError(f"matrix is not symmetric (row {row})")
    diag = a.diagonal()
    neg = np.flatnonzero(diag < 0)
    if neg.size:
        raise ValueError(f"negative diagonal entry in row {neg[0]}")
    off = (a - sp.diags(diag)).tocoo()
    keep = (off.row < off.col) & (off.data != 0)
    r, c, val = off.row[keep].astype(np.int64), off.col[keep].astype(np.int64), off.data[keep]
    offsum = np.asarray(abs(a - sp.diags(diag)).sum(axis=1)).reshape(-1)
    excess = diag - offsum
    bad = np.flatnonzero(excess < -tol * np.maximum(diag, 1.0))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"row {i} is not diagonally dominant: diagonal {diag[i]} < off-diagonal sum {offsum[i]}")
    excess = np.maximum(excess, 0.0)
    neg_e = val < 0
    pos_e = ~neg_e
    wn, wp = -val[neg_e], val[pos_e]
    rn, cn, rp, cp = r[neg_e], c[neg_e], r[pos_e], c[pos_e]
    mirror = np.flatnonzero(excess > 0)
    u = np.concatenate([rn, rn + n, rp, rp + n, mirror])
    v = np.concatenate([cn, cn + n, cp + n, cp, mirror + n])
    w = np.concatenate([wn, wn, wp, wp, excess[mirror] / 2.0])
    g = WeightedGraph(2 * n, u, v, w)
    return SDDReduction(laplacian=laplacian_of(g), n_original=n)


def _as_dense(a) -> np.ndarray:
    if isinstance(a, LaplacianMatrix):
        return a.toarray()
    if sp.issparse(a):
        return a.toarray()
    return np.asarray(a, dtype=np.float64)


def spectral_order_check(a, b, tol: float = 0.0) -> bool:
    """Dense test of ``A ⪯ B`` on the joint range of the two matrices.

    ``tol`` is an absolute slack on the smallest eigenvalue of ``B − A``;
    a further ``1e-12`` relative to the matrices' scale absorbs round-off.
    """
    a, b = _as_dense(a), _as_dense(b)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return True
    gram = a @ a + b @ b
    vals, vecs = np.linalg.eigh(gram)
    cutoff = max(vals.max(), 0.0) * a.shape[0] * np.finfo(float).eps * 10
    basis = vecs[:, vals > cutoff]
    if basis.shape[1] == 0:
        return True
    diff = basis.T @ (b - a) @ basis
    lam = np.linalg.eigvalsh((diff + diff.T) / 2)
    scale = float(np.sqrt(max(vals.max(), 0.0)))
    return bool(lam.min() >= -tol - 1e-12 * scale)


class DenseOracle:
    """Dense pseudoinverse of a Laplacian for testing.

    Parameters
    ----------
    lap : LaplacianMatrix, sparse matrix or array
    max_n : int
        Refuse larger inputs; the oracle is cubic in n.
    """

    def __init__(self, lap, max_n: int = 2000):
        dense = _as_dense(lap)
        n = dense.shape[0]
        if n > max_n:
            raise ValueError(f"dense oracle limited to n <= {max_n}, got {n}")
        self.matrix = dense
        if n == 0:
            self.pinv = np.zeros((0, 0))
            return
        vals, vecs = np.linalg.eigh(dense)
        cutoff = max(abs(vals).max(), 1.0) * n * np.finfo(float).eps * 10
        inv = np.where(vals > cutoff, 1.0 / np.where(vals > cutoff, vals, 1.0), 0.0)
        self.pinv = (vecs * inv) @ vecs.T
        self.eigenvalues = vals

    def solve(self, b) -> np.ndarray:
        return self.pinv @ np.asarray(b, dtype=np.float64)

    def norm(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(np.sqrt(max(x @ self.matrix @ x, 0.0)))

    def relative_error(self, x, b) -> float:
        """``‖x − L†b‖_L / ‖L†b‖_L`` (0 when both are zero)."""
        exact = self.solve(b)
        ref = self.norm(exact)
        err = self.norm(np.asarray(x) - exact)
        if ref == 0:
            return 0.0 if err == 0 else float("inf")
        return err / ref

    def reconstruction_error(self) -> float:
        """Relative Frobenius error of ``L L† L`` against ``L``."""
        a = self.matrix
        denom = np.linalg.norm(a)
        if denom == 0:
            return 0.0
        return float(np.linalg.norm(a @ self.pinv @ a - a) / denom)

