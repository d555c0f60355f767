"""Recursive solver chain and the top-level driver."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .config import SolverConfig, SolveStats
from .elimination import CholeskyFactor
from .errors import RecursionDepthError
from .graph import (LaplacianMatrix, SDDReduction, WeightedGraph, _project, laplacian_of,
                    sdd_to_laplacian)
from .iterative import (IterationTrace, RandRichardson, SolverOperator, coarse_solver,
                        direct_inner, precon_cheby, precon_richardson)
from .trees import (SpanningTree, StretchBounds, compute_stretch, low_stretch_tree,
                    lp_stretch_norm, scale_tree)


class InconsistentRHSWarning(UserWarning):
    """The right-hand side had a component outside the Laplacian's range."""


def level_kappa(n: int, m: int, norm_p: float, cfg: SolverConfig) -> float:
    """Condition number assigned to a level of the chain.

    ``c · (log log n)^(4/(2p−1)) · (‖tau‖_p^p / m)^(1/p)``, clamped to
    ``[1, c · log² n]``. Logarithms are natural; ``log log n`` is floored
    at 1.
    """
    if m == 0 or norm_p <= 0:
        return 1.0
    ln = math.log(max(n, 2))
    lnln = max(math.log(ln), 1.0)
    kappa = cfg.c * lnln ** (4.0 / (2.0 * cfg.p - 1.0)) * (norm_p / m) ** (1.0 / cfg.p)
    cap = max(cfg.c * ln * ln, 1.0)
    return float(min(max(kappa, 1.0), cap))


class RecursiveSolver:
    """One level of the solver chain for ``(g, t, tau)``.

    Small levels (few vertices or few off-tree edges) are solved
    directly. Otherwise the tree is scaled up by the level's condition
    number ``κ``, and Chebyshev iteration on ``L_g`` is preconditioned by
    randomized Richardson on the scaled graph, whose reduced subproblems
    are solved by the next level.

    The setup (scaling, sampler, coarse factorization) is built once and
    reused across calls.
    """

    def __init__(self, g: WeightedGraph, t: SpanningTree, tau: StretchBounds,
                 cfg: SolverConfig | None = None, depth: int = 0,
                 stats: SolveStats | None = None, chain: tuple = ()):
        self.cfg = cfg or SolverConfig()
        self.g, self.t, self.tau = g, t, tau
        self.depth = depth
        self.stats = stats if stats is not None else SolveStats()
        self.norm_p = lp_stretch_norm(tau, self.cfg.p)
        self.chain = chain + ((g.n_vertices, g.n_edges, self.norm_p),)
        if depth > self.cfg.max_depth:
            raise RecursionDepthError(f"solver chain deeper than {self.cfg.max_depth} levels",
                                      chain=list(self.chain))
        lv = self.stats.level(depth)
        lv.n = max(lv.n, g.n_vertices)
        lv.m = max(lv.m, g.n_edges)
        lv.off_tree = max(lv.off_tree, len(tau))
        lv.norm_p = max(lv.norm_p, self.norm_p)
        index = lv.operators
        lv.operators += 1
        self.count, self.labels = g.components
        self.lap = laplacian_of(g)
        self.is_base = (g.n_vertices <= self.cfg.base_vertices or len(tau) <= self.cfg.base_off_tree)
        if self.is_base:
            self.direct = coarse_solver(g)
            self.kappa = 1.0
            return
        self.kappa = level_kappa(g.n_vertices, g.n_edges, self.norm_p, self.cfg)
        lv.kappa = max(lv.kappa, self.kappa)
        g2, t2, tau2 = scale_tree(g, t, tau, self.kappa)
        self.scaled_lap = laplacian_of(g2)
        seq = np.random.SeedSequence(self.cfg.seed, spawn_key=(depth, index))
        self.rr = RandRichardson(g2, t2, tau2, inner=self._inner, coarse=coarse_solver(g2),
                                 cfg=self.cfg, rng=np.random.default_rng(seq),
                                 stats=self.stats, depth=depth)

    def _inner(self, f: CholeskyFactor) -> SolverOperator:
        red = f.reduced_graph
        cfg = self.cfg
        small = red.n_vertices <= cfg.base_vertices or len(f.reduced_tau) <= cfg.base_off_tree
        stalled = red.n_vertices > cfg.shrink_factor * self.g.n_vertices
        if small or stalled:
            lv = self.stats.level(self.depth + 1)
            lv.direct_solves += 1
            lv.stalled += int(stalled and not small)
            return direct_inner(f)
        child = RecursiveSolver(red, f.reduced_tree, f.reduced_tau, self.cfg, self.depth + 1,
                                self.stats, self.chain)
        return child.operator()

    def __call__(self, b, eps: float) -> np.ndarray:
        b = _project(np.asarray(b, dtype=np.float64), self.labels, self.count)
        lv = self.stats.level(self.depth)
        lv.solves += 1
        if not np.any(b):
            return np.zeros_like(b)
        if self.is_base:
            lv.direct_solves += 1
            return self.direct(b)
        trace = IterationTrace()
        x = precon_cheby(self.lap, self.scaled_lap, self.rr, b, self.kappa, eps,
                         inner_rule=self.cfg.inner_rule, trace=trace)
        lv.cheby_iterations += len(trace)
        return x

    def operator(self) -> SolverOperator:
        return SolverOperator(self, matrix=self.lap, name=f"recursive[{self.depth}]")


def solve_recursive(g: WeightedGraph, t: SpanningTree, tau: StretchBounds, b, eps: float,
                    cfg: SolverConfig | None = None, depth: int = 0,
                    stats: SolveStats | None = None) -> np.ndarray:
    """Solve ``L_g x = b`` to relative error ``eps`` in the ``L_g`` norm."""
    return RecursiveSolver(g, t, tau, cfg, depth, stats)(b, eps)


@dataclass(frozen=True, eq=False)
class EmbeddingMap:
    """Map between an original graph and a larger graph embedding it.

    ``select[i]`` is the vertex of the embedding graph standing for
    original vertex ``i`` (one 1 per row of the selection matrix).
    ``labels`` gives the original graph's components; the companion
    projection removes the mean on each of them.
    """

    select: np.ndarray
    n_embedded: int
    labels: np.ndarray | None = None

    @classmethod
    def identity(cls, n: int) -> "EmbeddingMap":
        return cls(np.arange(n), n)

    @property
    def n_original(self) -> int:
        return int(self.select.shape[0])

    def _pi1(self, x: np.ndarray) -> np.ndarray:
        if self.labels is None:
            return x - x.mean() if x.size else x
        return _project(x, self.labels, int(self.labels.max()) + 1)

    def selection_matrix(self) -> sp.csr_matrix:
        n = self.n_original
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.select)), shape=(n, self.n_embedded))

    def lift(self, b_hat) -> np.ndarray:
        """Right-hand side of the embedding graph for an original one."""
        b_hat = np.asarray(b_hat, dtype=np.float64)
        if b_hat.shape != (self.n_original,):
            raise ValueError("dimension mismatch")
        out = np.zeros(self.n_embedded)
        np.add.at(out, self.select, self._pi1(b_hat))
        return out


def transfer_solution(x_embedded, emap: EmbeddingMap) -> np.ndarray:
    """Restrict a solution of the embedding graph to the original vertices."""
    x = np.asarray(x_embedded, dtype=np.float64)
    if x.shape != (emap.n_embedded,):
        raise ValueError(f"dimension mismatch: expected ({emap.n_embedded},), got {x.shape}")
    return emap._pi1(x[emap.select])


@dataclass(eq=False)
class SolveResult:
    x: np.ndarray
    stats: SolveStats
    n: int
    m: int
    norm_p: float
    total_stretch: float
    inconsistent: bool = False
    trace: IterationTrace | None = None
    timings: dict = field(default_factory=dict)


def graph_from_matrix(m):
    """Graph of a Laplacian matrix, or the doubled reduction of an SDD matrix.

    Returns ``(graph, reduction)`` where ``reduction`` is ``None`` when
    the input already is a Laplacian.
    """
    a = sp.csr_matrix(m, dtype=np.float64)
    n = a.shape[0]
    if a.shape == (n, n):
        off = (a - sp.diags(a.diagonal())).tocoo()
        rowsum = np.asarray(a.sum(axis=1)).reshape(-1)
        scale = float(abs(a).max()) if a.nnz else 1.0
        sym = abs(a - a.T).max() <= 1e-12 * scale if a.nnz else True
        if sym and np.all(off.data <= 0) and np.all(np.abs(rowsum) <= 1e-12 * max(scale, 1.0) * 4):
            keep = (off.row < off.col) & (off.data < 0)
            g = WeightedGraph(n, off.row[keep], off.col[keep], -off.data[keep])
            return g, None
    red = sdd_to_laplacian(a)
    return red.graph, red


def top_solve(problem, b, eps: float = 1e-8, cfg: SolverConfig | None = None, *,
              embedding: tuple | None = None, trace: IterationTrace | None = None) -> SolveResult:
    """Solve a Laplacian or SDD system to relative error ``eps``.

    Builds a low-stretch tree, runs the recursive solver at the constant
    accuracy ``cfg.eps0`` and refines it with preconditioned Richardson.

    Parameters
    ----------
    problem : WeightedGraph, LaplacianMatrix, sparse matrix or array
        Non-Laplacian matrices must be SDD and are reduced to a Laplacian
        of twice the size.
    b : array_like
        Right-hand side. For Laplacians it is projected onto the range;
        a warning is raised if that changed it.
    eps : float
    cfg : SolverConfig
    embedding : (WeightedGraph, EmbeddingMap), optional
        Solve through a larger graph whose pseudoinverse, restricted by
        the map, approximates the original one within a factor 2.
    trace : IterationTrace, optional
        Receives the outer iterations.
    """
    cfg = cfg or SolverConfig()
    if not (isinstance(eps, (int, float)) and math.isfinite(eps) and eps > 0):
        raise ValueError(f"eps must be a positive number, got {eps!r}")
    t0 = time.perf_counter()
    reduction: SDDReduction | None = None
    if isinstance(problem, WeightedGraph):
        g = problem
    elif isinstance(problem, LaplacianMatrix):
        g = problem.graph
    else:
        g, reduction = graph_from_matrix(problem)
    b = np.asarray(b, dtype=np.float64)
    n_in = reduction.n_original if reduction is not None else g.n_vertices
    if b.shape != (n_in,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({n_in},)")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side has non-finite entries")
    rhs = reduction.forward(b) if reduction is not None else b
    count, labels = g.components
    proj = _project(rhs, labels, count)
    inconsistent = bool(np.linalg.norm(rhs - proj) > 1e-10 * max(np.linalg.norm(rhs), 1e-300))
    if inconsistent:
        warnings.warn("right-hand side is not in the range; projected", InconsistentRHSWarning,
                      stacklevel=2)
    stats = SolveStats()
    lap = laplacian_of(g)
    solve_graph, emap = (g, None) if embedding is None else embedding
    tree = low_stretch_tree(solve_graph, seed=cfg.seed, method=cfg.tree)
    tau = compute_stretch(solve_graph, tree)
    t1 = time.perf_counter()
    solver = RecursiveSolver(solve_graph, tree, tau, cfg, 0, stats)
    if emap is None:
        if solver.is_base:
            x = solver(proj, eps)
            stats.outer_iterations = 1
            if trace is not None:
                trace.record(x, 0.0, 1)
        else:
            tr = trace if trace is not None else IterationTrace(label="outer")
            op = solver.operator()
            x = precon_richardson(lap, op, proj, eps, rate=cfg.eps0, inner_eps=cfg.eps0, trace=tr)
            stats.outer_iterations = len(tr)
    else:
        inner = solver.operator()
        op = SolverOperator(lambda r, e: transfer_solution(inner(emap.lift(r), e), emap),
                            matrix=lap, name="embedded")
        tr = trace if trace is not None else IterationTrace(label="outer")
        x = precon_richardson(lap, op, proj, eps, rate=0.9, inner_eps=cfg.eps0, trace=tr)
        stats.outer_iterations = len(tr)
    t2 = time.perf_counter()
    stats.timings = {"setup": t1 - t0, "solve": t2 - t1}
    out = reduction.backward(x) if reduction is not None else x
    return SolveResult(out, stats, g.n_vertices, g.n_edges, solver.norm_p, tau.total,
                       inconsistent, trace, dict(stats.timings))
