"""Richardson and Chebyshev iterations, randomized Richardson and direct solvers."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import splu

from .config import SolverConfig, SolveStats
from .elimination import CholeskyFactor, apply_factor_solve, eliminate_arrays, greedy_eliminate
from .errors import NonConvergenceError
from .graph import WeightedGraph, _project, apply, laplacian_of, matvec, quadratic_form
from .sampling import PreconSampler, PreconTuple, SampleConfig, _rng, rand_precon
from .trees import SpanningTree, StretchBounds


class SolverOperator:
    """Approximate solver ``(b, eps) -> x`` for a fixed matrix.

    The contract is ``‖x − M⁺b‖_M ≤ eps · ‖M⁺b‖_M``.

    Parameters
    ----------
    fn : callable
        ``fn(b, eps)`` returning the approximate solution.
    matrix : optional
        The matrix ``M`` the contract refers to.
    name : str
    sandwich : float
        Upper constant ``c`` of ``M⁺ ⪯ Z ⪯ c·M⁺`` if the operator is a
        fixed linear map ``Z`` (1 for exact solvers).
    """

    def __init__(self, fn: Callable[[np.ndarray, float], np.ndarray], matrix=None,
                 name: str = "solver", sandwich: float = 1.0):
        self.fn = fn
        self.matrix = matrix
        self.name = name
        self.sandwich = sandwich
        self.calls = 0

    def __call__(self, b, eps: float = 0.0) -> np.ndarray:
        self.calls += 1
        return self.fn(np.asarray(b, dtype=np.float64), float(eps))

    def __repr__(self) -> str:
        return f"SolverOperator({self.name!r}, calls={self.calls})"


@dataclass
class IterationTrace:
    """Per-iteration record of an iterative solve.

    ``error_fn`` (test mode) maps an iterate to its error against an
    oracle; entries are ``None`` when it is not set.
    """

    label: str = ""
    residual: list = field(default_factory=list)
    error: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    inner_calls: list = field(default_factory=list)
    error_fn: Callable | None = None
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def record(self, x: np.ndarray, residual: float, inner_calls: int = 0) -> None:
        self.residual.append(float(residual))
        self.error.append(None if self.error_fn is None else float(self.error_fn(x)))
        self.wall.append(time.perf_counter() - self._t0)
        self.inner_calls.append(int(inner_calls))

    def __len__(self) -> int:
        return len(self.residual)

    def rows(self):
        for i in range(len(self)):
            yield {"label": self.label, "iteration": i + 1, "residual": self.residual[i],
                   "error": self.error[i], "wall": self.wall[i], "inner_calls": self.inner_calls[i]}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.rows())


class DirectSolver:
    """Sparse LU of a Laplacian grounded at one vertex per component.

    Parameters
    ----------
    n : int
    u, v, w : ndarray
        Edges.
    ground : ndarray
        One vertex per connected component; these rows are dropped.
    labels : ndarray, optional
        Component labels; when given, solutions are made zero-mean per
        component, otherwise they are zero at the ground vertices.
    """

    DENSE_LIMIT = 400

    def __init__(self, n, u, v, w, ground, labels=None, n_components=None):
        self.n = int(n)
        keep = np.ones(self.n, dtype=bool)
        keep[ground] = False
        self.keep = keep
        self.labels = labels
        self.n_components = n_components
        nk = int(keep.sum())
        self.lu = None
        self.chol = None
        if nk == 0:
            return
        idx = np.cumsum(keep) - 1
        deg = np.bincount(u, weights=w, minlength=self.n) + np.bincount(v, weights=w, minlength=self.n)
        both = keep[u] & keep[v]
        iu, iv, wb = idx[u[both]], idx[v[both]], w[both]
        kv = np.flatnonzero(keep)
        if nk <= self.DENSE_LIMIT:
            # small systems: dense Cholesky is much cheaper than sparse LU setup
            mat = np.zeros((nk, nk))
            mat[idx[kv], idx[kv]] = deg[kv]
            np.add.at(mat, (iu, iv), -wb)
            np.add.at(mat, (iv, iu), -wb)
            self.chol = cho_factor(mat, lower=True, check_finite=False)
            return
        rows = np.concatenate([iu, iv, idx[kv]])
        cols = np.concatenate([iv, iu, idx[kv]])
        vals = np.concatenate([-wb, -wb, deg[kv]])
        mat = sp.csc_matrix((vals, (rows, cols)), shape=(nk, nk))
        self.lu = splu(mat, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = np.zeros(self.n)
        if self.chol is not None:
            x[self.keep] = cho_solve(self.chol, b[self.keep], check_finite=False)
        elif self.lu is not None:
            x[self.keep] = self.lu.solve(b[self.keep])
        if self.labels is not None:
            x = _project(x, self.labels, self.n_components)
        return x


def coarse_solver(g: WeightedGraph, t: SpanningTree | None = None,
                  tau: StretchBounds | None = None) -> SolverOperator:
    """Direct solver for ``L_g``, handling each component separately.

    Right-hand sides are projected onto the range first, so a vector in
    the null space maps to zero. Being exact, its sandwich constants
    are (1, 1).
    """
    count, labels = g.components
    _, ground = np.unique(labels, return_index=True)
    ds = DirectSolver(g.n_vertices, g.u, g.v, g.w, ground, labels, count)
    return SolverOperator(lambda b, eps: ds.solve(_project(b, labels, count)),
                          matrix=laplacian_of(g), name="direct", sandwich=1.0)


def direct_inner(f: CholeskyFactor) -> SolverOperator:
    """Exact solver for the reduced graph of an elimination."""
    g = f.reduced_graph
    ds = DirectSolver(g.n_vertices, g.u, g.v, g.w, f.reduced_roots)
    return SolverOperator(lambda b, eps: ds.solve(b), name="direct-reduced")


# --- Chebyshev polynomials -------------------------------------------------

def cheby_t(i: int, x: float) -> float:
    """First-kind Chebyshev polynomial by recurrence (``i >= 0``)."""
    if i < 0:
        raise ValueError("first-kind index must be >= 0")
    prev, cur = 1.0, x
    if i == 0:
        return prev
    for _ in range(i - 1):
        prev, cur = cur, 2.0 * x * cur - prev
    return cur


def cheby_u(i: int, x: float) -> float:
    """Second-kind Chebyshev polynomial by recurrence (``i >= -1``)."""
    if i < -1:
        raise ValueError("second-kind index must be >= -1")
    prev, cur = 0.0, 1.0
    if i == -1:
        return prev
    for _ in range(i):
        prev, cur = cur, 2.0 * x * cur - prev
    return cur


def cheby_iterations(kappa: float, eps: float) -> int:
    """Smallest ``i >= 1`` with ``1 / T_i(1 + 1/kappa) <= eps / 2``."""
    delta = 1.0 + 1.0 / kappa
    goal = math.log(2.0 / eps)
    q = delta
    log_t = math.log(delta)
    i = 1
    while log_t < goal:
        q = 2.0 * delta - 1.0 / q
        log_t += math.log(q)
        i += 1
    return i


def cheby_inner_accuracy(eps: float, kappa: float, iterations: int, rule: str = "literal") -> float:
    """Accuracy to request from the preconditioner solve in Chebyshev iteration.

    ``"literal"`` is ``eps⁴ / (30 κ⁴)``. ``"derived"`` is
    ``eps / (12 N (N+1))``: with ``N`` steps the accumulated inner error
    is at most ``6 N (N+1)`` times the per-step relative error, which
    then stays below ``eps / 2``.
    """
    if rule == "literal":
        return eps ** 4 / (30.0 * kappa ** 4)
    if rule == "derived":
        return eps / (12.0 * iterations * (iterations + 1))
    raise ValueError(f"unknown inner accuracy rule {rule!r}")


# --- Richardson and Chebyshev ------------------------------------------------

def richardson_step(z_solve, y, x, b, alpha: float, eps: float = 0.0) -> np.ndarray:
    """``x − alpha · z_solve(Y x − b)``."""
    r = matvec(y, np.asarray(x, dtype=np.float64)) - b
    step = z_solve(r, eps) if isinstance(z_solve, SolverOperator) else z_solve(r)
    return x - alpha * step


def _norm(a, x) -> float:
    return math.sqrt(max(quadratic_form(a, x), 0.0))


def precon_richardson(a, solve_b, b, eps: float, *, rate: float = 0.9, inner_eps: float = 0.2,
                      budget_factor: float = 10.0, trace: IterationTrace | None = None) -> np.ndarray:
    """Preconditioned Richardson iteration ``x ← x + solve_b(b − A x)``.

    Stops once the certified bound ``rate/(1−rate) · ‖Δx‖_A`` on the
    error drops below ``eps`` times the matching lower bound on
    ``‖A⁺b‖_A``. ``rate`` must bound the per-step contraction in the
    A-norm (9/10 under the usual preconditions).

    Raises
    ------
    NonConvergenceError
        After ``budget_factor`` times the expected number of steps.
    """
    b = np.asarray(b, dtype=np.float64)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not (0 < rate < 1):
        raise ValueError("rate must lie in (0, 1)")
    if not np.any(b):
        return np.zeros_like(b)
    expected = max(1, math.ceil(math.log(eps) / math.log(rate))) + 1
    budget = int(math.ceil(budget_factor * expected))
    x = solve_b(b, inner_eps)
    factor = rate / (1.0 - rate)
    bound = float("inf")
    for it in range(1, budget + 1):
        r = b - matvec(a, x)
        y = solve_b(r, inner_eps)
        x = x + y
        dx = _norm(a, y)
        xn = _norm(a, x)
        bound = factor * dx
        if trace is not None:
            trace.record(x, float(np.linalg.norm(r)), getattr(solve_b, "calls", 0))
        if bound <= eps * (xn - bound):
            return x
    raise NonConvergenceError(
        f"preconditioned Richardson did not reach eps={eps:g} in {budget} iterations",
        iterations=budget, error_bound=bound, trace=trace)


def precon_cheby(a, b_matrix, solve_b, rhs, kappa: float, eps: float, *,
                 iterations: int | None = None, inner_eps: float | None = None,
                 inner_rule: str = "literal", trace: IterationTrace | None = None) -> np.ndarray:
    """Preconditioned Chebyshev iteration for ``A x = rhs`` with ``A ⪯ B ⪯ κA``.

    Uses ``x_0 = 0``, ``x_1 = solve_b(rhs)`` and the three-term update
    with ``delta = 1 + 1/κ``; coefficient ratios of consecutive ``T_i(delta)``
    come from the scalar recurrence. Runs until ``1/T_N(delta) <= eps/2``.

    Raises
    ------
    ValueError
        If ``kappa < 1``.
    NonConvergenceError
        If the preconditioned residual fails to reach a new minimum over
        ``3·√κ·log(1/eps)`` consecutive steps.
    """
    if not kappa >= 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    rhs = np.asarray(rhs, dtype=np.float64)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    n_iter = iterations if iterations is not None else cheby_iterations(kappa, eps)
    e_in = inner_eps if inner_eps is not None else cheby_inner_accuracy(eps, kappa, n_iter, inner_rule)
    delta = 1.0 + 1.0 / kappa
    window = max(1, math.ceil(3.0 * math.sqrt(kappa) * math.log(max(1.0 / eps, math.e))))
    calls = lambda: getattr(solve_b, "calls", 0)
    x_prev = np.zeros_like(rhs)
    x = solve_b(rhs, e_in)
    if trace is not None:
        trace.record(x, float(np.linalg.norm(rhs)), calls())
    q_prev = delta
    best, since_best = math.inf, 0
    for _ in range(1, n_iter):
        r = matvec(a, x) - rhs
        y = solve_b(r, e_in)
        q = 2.0 * delta - 1.0 / q_prev
        x, x_prev = (2.0 * delta / q) * (x - y) - (1.0 / (q_prev * q)) * x_prev, x
        q_prev = q
        rn = float(np.linalg.norm(r))
        if trace is not None:
            trace.record(x, rn, calls())
        if rn < best:
            best, since_best = rn, 0
        else:
            since_best += 1
            if since_best >= window:
                raise NonConvergenceError("Chebyshev iteration stagnated", trace=trace,
                                          iterations=n_iter, best_residual=best)
    return x


# --- randomized Richardson ---------------------------------------------------

class RandRichardson:
    """Richardson iteration with a fresh randomized preconditioner per step.

    Each step draws ``(H, T', tau')``, solves with ``L_H`` by elimination
    plus ``inner`` on the reduced graph at accuracy
    ``1 / (320 · c_s · log n)``, and moves ``step`` times that solution.
    A pass of ``t`` steps from zero is accepted when the coarse operator
    certifies ``‖Z(Lx − b)‖_L <= (eps/γ) ‖Z b‖_L``; otherwise the pass is
    restarted with a longer ``t``.

    The first pass length is ``t_const · log(log n / eps)``. After every
    pass the per-step contraction is estimated from the certified ratio
    and used to size the next pass (and the first pass of later calls).

    Parameters
    ----------
    g, t, tau
        The system graph with its tree and stretch bounds.
    inner : callable, optional
        ``inner(factor) -> SolverOperator`` for reduced graphs; defaults to
        an exact direct solve.
    coarse : SolverOperator, optional
        Defaults to :func:`coarse_solver` on ``g``.
    cfg : SolverConfig
    rng : numpy Generator, int or None
    stats : SolveStats, optional
    depth : int
    """

    def __init__(self, g: WeightedGraph, t: SpanningTree, tau: StretchBounds, inner=None,
                 coarse: SolverOperator | None = None, cfg: SolverConfig | None = None,
                 rng=None, stats: SolveStats | None = None, depth: int = 0):
        self.cfg = cfg or SolverConfig()
        self.g, self.t, self.tau = g, t, tau
        self.lap = laplacian_of(g)
        self.coarse = coarse or coarse_solver(g)
        self.inner = inner or direct_inner
        c = self.cfg
        self.sampler = PreconSampler(g, t, tau, c.delta, c.p, c.edge_factor, c.stretch_factor, c.max_loops)
        self.rng = _rng(rng, c.seed)
        self.log_n = max(math.log(max(g.n_vertices, 2)), 1.0)
        self.eps1 = 1.0 / (320.0 * c.c_s * self.log_n)
        self.rate: float | None = None
        self.stats = stats
        self.depth = depth
        self.history: list[tuple[int, int]] = []

    @property
    def gamma(self) -> float:
        if self.cfg.c_z is None:
            return self.coarse.sandwich
        return self.cfg.c_z * self.log_n ** 4

    def _first_length(self, target: float) -> int:
        if self.rate is not None:
            return max(2, math.ceil(1.2 * math.log(target) / math.log(self.rate)))
        return max(1, math.ceil(self.cfg.t_const * math.log(self.log_n / target * self.gamma)))

    def step_solve(self, r: np.ndarray) -> np.ndarray:
        """Draw one preconditioner and solve with it (exact up to ``inner``)."""
        d = self.sampler.draw(self.rng)
        s = self.sampler
        idx = d.off_index
        f = eliminate_arrays(self.t, d.tree_weights, s.off_u[idx], s.off_v[idx], d.off_weights,
                             self.cfg.delta * d.off_counts.astype(np.float64))
        if self.stats is not None:
            lv = self.stats.level(self.depth)
            lv.precon_loops += d.loops
            lv.precon_draws += 1
        return apply_factor_solve(f, self.inner(f), r, self.eps1)

    def __call__(self, b, eps: float) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        lv = self.stats.level(self.depth) if self.stats is not None else None
        if lv is not None:
            lv.rr_calls += 1
        if not np.any(b):
            return np.zeros_like(b)
        if not eps > 0:
            raise ValueError("eps must be positive")
        mat = self.lap.matrix
        zb = self.coarse(b)
        ref = _norm(self.lap, zb)
        target = eps / self.gamma
        length = self._first_length(target)
        ratios = []
        for restart in range(self.cfg.max_restarts + 1):
            x = np.zeros_like(b)
            for _ in range(length):
                x = x - self.cfg.step * self.step_solve(mat @ x - b)
            if lv is not None:
                lv.rr_iterations += length
            ratio = _norm(self.lap, self.coarse(mat @ x - b)) / ref
            ratios.append(ratio)
            rate = ratio ** (1.0 / length) if ratio > 0 else 0.5
            if ratio <= target:
                self.rate = min(max(rate, 1e-3), 1.0 - 1e-9)
                self.history.append((length, restart))
                return x
            if lv is not None:
                lv.restarts += 1
            if rate < 1.0:
                want = math.ceil(1.2 * math.log(target) / math.log(rate))
                length = max(length + 1, min(want, 4 * length))
            else:
                length *= 2
        raise NonConvergenceError(
            f"randomized Richardson failed after {self.cfg.max_restarts} restarts",
            ratios=ratios, measured_contraction=[r ** (1.0 / length) for r in ratios[-1:]])


def rand_richardson(g, t, tau, inner, b, eps, coarse=None, cfg: SolverConfig | None = None,
                    rng=None) -> np.ndarray:
    """One call of :class:`RandRichardson`."""
    return RandRichardson(g, t, tau, inner, coarse, cfg, rng)(b, eps)


def expectation_step(g: WeightedGraph, t: SpanningTree, tau: StretchBounds, x, b,
                     cfg: SampleConfig = SampleConfig(), rng=None, *, alpha: float = 0.1,
                     p: float = 0.9) -> tuple[np.ndarray, PreconTuple]:
    """One step ``x − alpha · L_H⁺ (L_G x − b)`` with a freshly drawn ``H``."""
    gen = _rng(rng, cfg.seed)
    pt = rand_precon(g, t, tau, cfg, p=p, rng=gen)
    f = greedy_eliminate(pt.graph, pt.tree, pt.tau)
    x = np.asarray(x, dtype=np.float64)
    r = apply(g, x) - np.asarray(b, dtype=np.float64)
    y = apply_factor_solve(f, direct_inner(f), r, 0.0)
    return x - alpha * y, pt
