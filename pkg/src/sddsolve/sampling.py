"""Importance sampling of rank-one terms and randomized tree preconditioners."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SamplingLoopError
from .graph import WeightedGraph, laplacian_csr
from .trees import SpanningTree, StretchBounds, lp_stretch_norm


@dataclass(frozen=True)
class SampleConfig:
    """Sampling parameters.

    Parameters
    ----------
    delta : float
        Weight given to each draw, relative to its bound; in (0, 1).
    seed : int, optional
        Seed used when no generator is passed explicitly.
    draw_method : {"counts", "search"}
        ``"counts"`` draws the multiplicity vector as one multinomial;
        ``"search"`` draws every index by binary search on the cumulative
        bounds. Both give the same distribution of multiplicities.
    """

    delta: float = 0.1
    seed: int | None = None
    draw_method: str = "counts"

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.draw_method not in ("counts", "search"):
            raise ValueError(f"unknown draw method {self.draw_method!r}")


def _rng(rng, seed) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(seed if rng is None else rng)


def base_draw_count(total: float, delta: float) -> int:
    """Smallest integer at least ``total / delta`` (with a guard for float noise)."""
    q = total / delta
    near = round(q)
    if abs(q - near) <= 1e-9 * max(1.0, abs(q)):
        return max(int(near), 1)
    return max(int(math.ceil(q)), 1)


def draw_counts(tau: np.ndarray, delta: float, rng: np.random.Generator,
                method: str = "counts") -> tuple[np.ndarray, int, int]:
    """Draw ``r`` uniform in ``[t, 2t-1]`` indices with probability ``tau / sum(tau)``.

    Returns
    -------
    counts : ndarray of int
        Multiplicity of each index.
    r, t : int
    """
    tau = np.asarray(tau, dtype=np.float64)
    total = float(tau.sum())
    if not total > 0:
        raise ValueError("stretch bounds are all zero")
    t = base_draw_count(total, delta)
    r = int(rng.integers(t, 2 * t))
    if method == "counts":
        counts = rng.multinomial(r, tau / total)
    else:
        cum = np.cumsum(tau)
        idx = np.searchsorted(cum, rng.random(r) * cum[-1], side="right")
        counts = np.bincount(np.minimum(idx, tau.shape[0] - 1), minlength=tau.shape[0])
    return counts.astype(np.int64), r, t


@dataclass(frozen=True, eq=False)
class RankOneDecomposition:
    """A base matrix plus rank-one terms ``v_i v_iᵀ`` with leverage bounds.

    Parameters
    ----------
    base : ndarray or sparse matrix
        The matrix X every sample starts from.
    vectors : ndarray or sparse matrix, shape (m, n)
        Row ``i`` is ``v_i``.
    tau : ndarray
        Upper bounds on ``trace(X⁺ v_i v_iᵀ)``.
    """

    base: object
    vectors: object
    tau: np.ndarray

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    def total(self):
        """Sum of all rank-one terms."""
        v = self.vectors
        out = v.T @ v
        return out.toarray() if sp.issparse(out) else out

    def combine(self, coefficients: np.ndarray):
        """``base + Σ coefficients_i v_i v_iᵀ``."""
        v = self.vectors
        if sp.issparse(v):
            out = self.base + (v.T @ sp.diags(coefficients) @ v)
        else:
            out = self.base + (v.T * coefficients) @ v
        return out

    @classmethod
    def from_graph(cls, g: WeightedGraph, t: SpanningTree, tau: StretchBounds | None = None,
                   *, dense: bool = True) -> "RankOneDecomposition":
        """Tree Laplacian as base, every edge as a term; tree edges get bound 1."""
        m, n = g.n_edges, g.n_vertices
        rows = np.repeat(np.arange(m), 2)
        cols = np.column_stack([g.u, g.v]).reshape(-1)
        s = np.sqrt(g.w)
        vals = np.column_stack([s, -s]).reshape(-1)
        vec = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        base = laplacian_csr(n, t.u, t.v, t.weights)
        bounds = np.ones(m)
        if tau is not None:
            bounds[tau.edge_ids] = tau.values
        if dense:
            return cls(base.toarray(), vec.toarray(), bounds)
        return cls(base, vec, bounds)


@dataclass(frozen=True, eq=False)
class SampleResult:
    matrix: object
    counts: np.ndarray
    r: int
    t: int


def sample(decomp: RankOneDecomposition, cfg: SampleConfig | float = SampleConfig(),
           rng=None) -> SampleResult:
    """Draw ``Z = X + Σ_j (delta / tau_{i_j}) v_{i_j} v_{i_j}ᵀ``."""
    if not isinstance(cfg, SampleConfig):
        cfg = SampleConfig(delta=float(cfg))
    gen = _rng(rng, cfg.seed)
    tau = np.asarray(decomp.tau, dtype=np.float64)
    if tau.size and tau.min() < 0:
        raise ValueError("stretch bounds must be non-negative")
    counts, r, t = draw_counts(tau, cfg.delta, gen, cfg.draw_method)
    coef = np.zeros_like(tau)
    nz = counts > 0
    coef[nz] = counts[nz] * cfg.delta / tau[nz]
    return SampleResult(decomp.combine(coef), counts, r, t)


@dataclass(frozen=True, eq=False)
class PreconTuple:
    """Sampled preconditioner graph with its tree and stretch bounds.

    ``graph`` lists the tree edges first (in the order of the source
    tree) followed by the distinct sampled off-tree edges. ``tau`` gives
    ``delta`` times the multiplicity of each off-tree edge.
    """

    graph: WeightedGraph
    tree: SpanningTree
    tau: StretchBounds
    source_edges: np.ndarray
    multiplicity: np.ndarray
    loops: int
    draws: int


@dataclass(eq=False)
class PreconDraw:
    """Raw arrays of one accepted draw (used on hot paths)."""

    tree_weights: np.ndarray
    off_index: np.ndarray
    off_counts: np.ndarray
    off_weights: np.ndarray
    loops: int
    draws: int


@dataclass(eq=False)
class PreconSampler:
    """Repeated draws of the randomized preconditioner for one (graph, tree, bounds).

    Parameters
    ----------
    g, t, tau
        Graph, spanning tree and off-tree stretch bounds.
    delta : float
    p : float
        Exponent of the stretch norm used in the acceptance tests.
    edge_factor, stretch_factor : float
        A draw is accepted when it has at most ``edge_factor · ‖tau‖_p^p``
        distinct off-tree edges and its new bounds have p-norm at most
        ``stretch_factor · ‖tau‖_p^p``.
    max_loops : int
    """

    g: WeightedGraph
    t: SpanningTree
    tau: StretchBounds
    delta: float = 0.1
    p: float = 0.9
    edge_factor: float = 4800.0
    stretch_factor: float = 480.0
    max_loops: int = 1000
    draw_method: str = "counts"
    loop_counts: list = field(default_factory=list)

    def __post_init__(self):
        k = self.t.n_tree_edges
        self.off_ids = np.asarray(self.tau.edge_ids, dtype=np.int64)
        self.off_u = self.g.u[self.off_ids]
        self.off_v = self.g.v[self.off_ids]
        self.off_w = self.g.w[self.off_ids]
        self.off_tau = np.asarray(self.tau.values, dtype=np.float64)
        self.tau_hat = np.concatenate([np.ones(k), self.off_tau])
        self.norm_p = lp_stretch_norm(self.off_tau, self.p)
        self.tree_w = self.t.weights

    def draw(self, rng: np.random.Generator) -> PreconDraw:
        k = self.t.n_tree_edges
        delta = self.delta
        if not self.tau_hat.sum() > 0:
            self.loop_counts.append(1)
            empty = np.zeros(0, dtype=np.int64)
            return PreconDraw(self.tree_w.copy(), empty, empty, np.zeros(0), 1, 0)
        for loop in range(1, self.max_loops + 1):
            counts, r, _ = draw_counts(self.tau_hat, delta, rng, self.draw_method)
            off_counts_all = counts[k:]
            idx = np.flatnonzero(off_counts_all)
            c = off_counts_all[idx]
            new_tau = delta * c
            if idx.size <= self.edge_factor * self.norm_p and \
                    float(np.sum(new_tau ** self.p)) <= self.stretch_factor * self.norm_p:
                self.loop_counts.append(loop)
                tree_w = self.tree_w * (1.0 + delta * counts[:k])
                off_w = c * delta * self.off_w[idx] / self.off_tau[idx]
                return PreconDraw(tree_w, idx, c, off_w, loop, r)
        raise SamplingLoopError(
            f"no acceptable sample after {self.max_loops} draws",
            norm_p=self.norm_p, n_off_tree=int(self.off_ids.size))

    def to_tuple(self, d: PreconDraw) -> PreconTuple:
        k = self.t.n_tree_edges
        n = self.g.n_vertices
        u = np.concatenate([self.t.u, self.off_u[d.off_index]])
        v = np.concatenate([self.t.v, self.off_v[d.off_index]])
        w = np.concatenate([d.tree_weights, d.off_weights])
        h = WeightedGraph(n, u, v, w)
        tree = relabel_tree(self.t, np.arange(k), h.n_edges, d.tree_weights)
        tau = StretchBounds(np.arange(k, h.n_edges), self.delta * d.off_counts.astype(np.float64))
        source = np.concatenate([self.t.edge_ids, self.off_ids[d.off_index]])
        mult = np.concatenate([np.zeros(k, dtype=np.int64), d.off_counts])
        return PreconTuple(h, tree, tau, source, mult, d.loops, d.draws)


def relabel_tree(t: SpanningTree, edge_ids, n_graph_edges: int, weights) -> SpanningTree:
    """Copy of ``t`` attached to another graph's edge numbering."""
    out = t.with_weights(weights)
    out.edge_ids = np.asarray(edge_ids, dtype=np.int64)
    out.n_graph_edges = int(n_graph_edges)
    return out


def rand_precon(g: WeightedGraph, t: SpanningTree, tau: StretchBounds,
                cfg: SampleConfig = SampleConfig(), *, p: float = 0.9,
                edge_factor: float = 4800.0, stretch_factor: float = 480.0,
                max_loops: int = 1000, rng=None) -> PreconTuple:
    """Draw one randomized preconditioner ``(H, T', tau')``.

    Every graph edge is sampled in proportion to its stretch bound, tree
    edges counting as 1. Sampled copies of tree edges are folded into the
    tree weight; each sampled off-tree edge is kept once with weight
    ``count · delta · w / tau``. Draws are repeated until the acceptance
    tests pass.
    """
    sampler = PreconSampler(g, t, tau, cfg.delta, p, edge_factor, stretch_factor,
                            max_loops, cfg.draw_method)
    return sampler.to_tuple(sampler.draw(_rng(rng, cfg.seed)))
