"""Empirical checks of the sampling moment bounds, contraction and spectral sandwich."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .graph import WeightedGraph, laplacian_csr, laplacian_of
from .iterative import cheby_t, cheby_u
from .sampling import PreconSampler, RankOneDecomposition, base_draw_count, draw_counts
from .trees import SpanningTree, StretchBounds, lp_stretch_norm

MAX_STATES = 10 ** 7


def _dense(a) -> np.ndarray:
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=np.float64)


def _range_basis(y: np.ndarray, rtol: float = 1e-10):
    """Eigenvectors of the range of ``y`` with their eigenvalues."""
    vals, vecs = np.linalg.eigh(y)
    keep = vals > rtol * max(vals.max(initial=0.0), 1e-300)
    return vals[keep], vecs[:, keep]


# --- moments ------------------------------------------------------------------

@dataclass
class MomentReport:
    """Moments of ``Z⁺`` against ``Y = Σ v_i v_iᵀ`` for one vector ``x``.

    ``first`` is ``E[xᵀ Z⁺ x]``, ``second`` is ``E[xᵀ Z⁺ Y Z⁺ x]`` and
    ``reference`` is ``xᵀ Y⁺ x``. Bounds are relative to ``reference``.
    """

    first: float
    second: float
    reference: float
    exact: bool
    first_stderr: float
    second_stderr: float
    delta: float
    lower_bound: float = 1.0 / 3.0
    first_upper_bound: float = 0.0
    second_upper_bound: float = 0.0
    samples: int = 0
    seed: int | None = None
    hypotheses_hold: bool = True

    def __post_init__(self):
        self.first_upper_bound = 1.0 / (1.0 - 2.0 * self.delta) if self.delta < 0.5 else math.inf
        self.second_upper_bound = 1.0 / (1.0 - 3.0 * self.delta) if self.delta < 1 / 3 else math.inf

    @property
    def _z(self) -> float:
        return 0.0 if self.exact else 3.0

    @property
    def first_lower_ok(self) -> bool:
        return self.first + self._z * self.first_stderr >= self.lower_bound * self.reference * (1 - 1e-12)

    @property
    def first_upper_ok(self) -> bool:
        return self.first - self._z * self.first_stderr <= self.first_upper_bound * self.reference * (1 + 1e-12)

    @property
    def second_upper_ok(self) -> bool:
        return self.second - self._z * self.second_stderr <= self.second_upper_bound * self.reference * (1 + 1e-12)

    @property
    def passed(self) -> bool:
        return self.first_lower_ok and self.first_upper_ok and self.second_upper_ok

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(first_lower_ok=self.first_lower_ok, first_upper_ok=self.first_upper_ok,
                   second_upper_ok=self.second_upper_ok, passed=self.passed)
        return out


def compositions(total: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    bars = np.array(list(itertools.combinations(range(total + parts - 1), parts - 1)), dtype=np.int64)
    bars = bars.reshape(-1, parts - 1)
    edges = np.column_stack([np.full(bars.shape[0], -1), bars,
                             np.full(bars.shape[0], total + parts - 1)])
    return np.diff(edges, axis=1) - 1


def state_count(tau, delta: float) -> int:
    """Number of (r, counts) outcomes of one sample."""
    tau = np.asarray(tau, dtype=np.float64)
    m = tau.size
    t = base_draw_count(float(tau.sum()), delta)
    return sum(math.comb(r + m - 1, m - 1) for r in range(t, 2 * t))


def _moments_of(base: np.ndarray, vecs: np.ndarray, coef: np.ndarray, x: np.ndarray, y: np.ndarray,
                diagonal: bool):
    """``xᵀZ⁺x`` and ``xᵀZ⁺YZ⁺x`` for a batch of coefficient vectors."""
    if diagonal:
        zd = np.diag(base)[None, :] + coef @ (vecs ** 2)
        inv = np.where(zd > 0, 1.0 / np.where(zd > 0, zd, 1.0), 0.0)
        zx = inv * x[None, :]
        first = zx @ x
        second = np.einsum("si,ij,sj->s", zx, y, zx)
        return first, second
    first = np.empty(coef.shape[0])
    second = np.empty(coef.shape[0])
    for k, c in enumerate(coef):
        z = base + (vecs.T * c) @ vecs
        zx = np.linalg.pinv(z, hermitian=True) @ x
        first[k] = x @ zx
        second[k] = zx @ y @ zx
    return first, second


def _hypotheses_hold(base: np.ndarray, vecs: np.ndarray, y: np.ndarray, tau: np.ndarray, tol: float = 1e-10) -> bool:
    """``X ⪯ Y`` and ``tau_i ≥ v_iᵀ X⁺ v_i``, the conditions the moment bounds assume."""
    vals, basis = _range_basis(y)
    whiten = basis / np.sqrt(vals)
    if np.linalg.eigvalsh(whiten.T @ base @ whiten).max(initial=0.0) > 1 + tol:
        return False
    lev = np.einsum("ij,jk,ik->i", vecs, np.linalg.pinv(base, hermitian=True), vecs)
    return bool(np.all(tau >= lev * (1 - tol)))


def verify_moments(decomp: RankOneDecomposition, delta: float, mode: str = "exhaustive",
                   x=None, *, trials: int = 10_000, seed: int = 0) -> MomentReport:
    """Check the expected inverse moments of a sampled matrix.

    Parameters
    ----------
    decomp : RankOneDecomposition
        Base ``X`` and terms ``v_i``; ``Y`` is the sum of the terms.
    delta : float
    mode : {"exhaustive", "monte_carlo"}
        Exhaustive mode enumerates every ``r`` and every count vector,
        weighting each by its exact multinomial probability.
    x : array_like, optional
        Defaults to the first coordinate vector.
    trials, seed
        Monte Carlo settings.

    Raises
    ------
    ValueError
        If exhaustive mode would exceed ``MAX_STATES`` outcomes.
    """
    base = _dense(decomp.base)
    vecs = _dense(decomp.vectors)
    tau = np.asarray(decomp.tau, dtype=np.float64)
    n = base.shape[0]
    x = np.eye(n)[0] if x is None else np.asarray(x, dtype=np.float64)
    y = vecs.T @ vecs
    y_pinv = np.linalg.pinv(y, hermitian=True)
    ref = float(x @ y_pinv @ x)
    hyp = _hypotheses_hold(base, vecs, y, tau)
    diagonal = (np.count_nonzero(base - np.diag(np.diag(base))) == 0
                and np.all(np.count_nonzero(vecs, axis=1) <= 1))
    if not np.any(x):
        return MomentReport(0.0, 0.0, 0.0, mode == "exhaustive", 0.0, 0.0, delta, hypotheses_hold=hyp)
    prob = tau / tau.sum()
    scale = delta / np.where(tau > 0, tau, 1.0)
    if mode == "exhaustive":
        states = state_count(tau, delta)
        if states > MAX_STATES:
            raise ValueError(f"exhaustive enumeration needs {states} states, limit {MAX_STATES}")
        t = base_draw_count(float(tau.sum()), delta)
        m = tau.size
        first = second = 0.0
        logp = np.log(np.where(prob > 0, prob, 1.0))
        for r in range(t, 2 * t):
            counts = compositions(r, m)
            # impossible outcomes (count on a zero-probability term) carry no weight
            counts = counts[np.all((counts == 0) | (prob[None, :] > 0), axis=1)]
            logw = gammaln(r + 1) - gammaln(counts + 1).sum(axis=1) + counts @ logp
            weight = np.exp(logw) / t
            f, s = _moments_of(base, vecs, counts * scale[None, :], x, y, diagonal)
            first += float(weight @ f)
            second += float(weight @ s)
        return MomentReport(first, second, ref, True, 0.0, 0.0, delta, samples=states, hypotheses_hold=hyp)
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    coef = np.empty((trials, tau.size))
    for k in range(trials):
        counts, _, _ = draw_counts(tau, delta, rng)
        coef[k] = counts * scale
    f, s = _moments_of(base, vecs, coef, x, y, diagonal)
    sq = math.sqrt(trials)
    return MomentReport(float(f.mean()), float(s.mean()), ref, False, float(f.std(ddof=1) / sq),
                        float(s.std(ddof=1) / sq), delta, samples=trials, seed=seed, hypotheses_hold=hyp)


def diagonal_decomposition(base_diag, term_weights, terms_on=None, tau=None) -> RankOneDecomposition:
    """Decomposition with diagonal base and terms ``w_i e_{k_i} e_{k_i}ᵀ``.

    ``tau`` defaults to the exact leverage ``w_i / base[k_i]``.
    """
    base_diag = np.asarray(base_diag, dtype=np.float64)
    w = np.asarray(term_weights, dtype=np.float64)
    on = np.arange(w.size) if terms_on is None else np.asarray(terms_on)
    vecs = np.zeros((w.size, base_diag.size))
    vecs[np.arange(w.size), on] = np.sqrt(w)
    if tau is None:
        tau = w / base_diag[on]
    return RankOneDecomposition(np.diag(base_diag), vecs, np.asarray(tau, dtype=np.float64))


# --- expected contraction -------------------------------------------------------

@dataclass
class ContractionReport:
    """Per-step error ratios ``‖x̄ − x′‖_Y / ‖x̄ − x‖_Y`` over independent draws."""

    squared_mean: float
    squared_stderr: float
    norm_mean: float
    norm_stderr: float
    trials: int
    variant: str
    seed: int
    squared_bound: float = 1.0 - 1.0 / 40.0
    norm_bound: float = 1.0 - 1.0 / 80.0
    histogram: list = field(default_factory=list)
    bin_edges: list = field(default_factory=list)

    @property
    def squared_ok(self) -> bool:
        """The upper 3σ confidence bound of the mean lies below the limit."""
        return self.squared_upper <= self.squared_bound

    @property
    def norm_ok(self) -> bool:
        return self.norm_upper <= self.norm_bound

    @property
    def squared_upper(self) -> float:
        return self.squared_mean + 3.0 * self.squared_stderr

    @property
    def norm_upper(self) -> float:
        return self.norm_mean + 3.0 * self.norm_stderr

    @property
    def passed(self) -> bool:
        return self.squared_ok and self.norm_ok

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(squared_ok=self.squared_ok, norm_ok=self.norm_ok, passed=self.passed,
                   squared_upper=self.squared_upper, norm_upper=self.norm_upper)
        return out


def _sampled_laplacian(g: WeightedGraph, t: SpanningTree, weights_per_edge: np.ndarray):
    n = g.n_vertices
    base = laplacian_csr(n, t.u, t.v, t.weights)
    keep = weights_per_edge > 0
    return base + laplacian_csr(n, g.u[keep], g.v[keep], weights_per_edge[keep])


def verify_expected_contraction(g: WeightedGraph, t: SpanningTree, tau: StretchBounds,
                                trials: int = 10_000, *, x=None, b=None, delta: float = 0.1,
                                alpha: float = 0.1, variant: str = "sample", seed: int = 0,
                                bins: int = 20) -> ContractionReport:
    """Monte Carlo contraction of one randomized Richardson step.

    ``variant="sample"`` draws ``Z = L_T + Σ (delta/tau_e) L_e`` over all
    edges (tree edges with bound 1); ``variant="precon"`` uses the
    resampled tree preconditioner, whose norm bound is ``1 − 1/160``.

    Raises
    ------
    ValueError
        If ``x`` already equals the solution.
    """
    lap = laplacian_of(g)
    y = lap.toarray()
    vals, basis = _range_basis(y)
    n = g.n_vertices
    rng = np.random.default_rng(seed)
    if b is None:
        b = y @ rng.standard_normal(n)
    b = np.asarray(b, dtype=np.float64)
    xbar = basis @ ((basis.T @ b) / vals)
    x = np.zeros(n) if x is None else np.asarray(x, dtype=np.float64)
    err0 = x - xbar
    e0 = float(err0 @ y @ err0)
    if e0 <= 1e-24 * max(float(xbar @ y @ xbar), 1e-300):
        raise ValueError("x equals the exact solution; the contraction ratio is undefined")
    r = y @ x - b
    sq = np.empty(trials)
    tau_all = np.ones(g.n_edges)
    tau_all[tau.edge_ids] = tau.values
    tree_mask = np.zeros(g.n_edges, dtype=bool)
    tree_mask[t.edge_ids] = True
    sampler = PreconSampler(g, t, tau, delta) if variant == "precon" else None
    for k in range(trials):
        if variant == "sample":
            counts, _, _ = draw_counts(tau_all, delta, rng)
            z = _sampled_laplacian(g, t, counts * delta / tau_all * g.w).toarray()
        elif variant == "precon":
            d = sampler.draw(rng)
            off = sampler.off_ids[d.off_index]
            z = (laplacian_csr(n, t.u, t.v, d.tree_weights)
                 + laplacian_csr(n, g.u[off], g.v[off], d.off_weights)).toarray()
        else:
            raise ValueError(f"unknown variant {variant!r}")
        zb = basis.T @ z @ basis
        step = basis @ np.linalg.solve(zb, basis.T @ r)
        err = x - alpha * step - xbar
        sq[k] = float(err @ y @ err) / e0
    nr = np.sqrt(sq)
    hist, edges = np.histogram(sq, bins=bins)
    root = math.sqrt(trials)
    rep = ContractionReport(float(sq.mean()), float(sq.std(ddof=1) / root), float(nr.mean()),
                            float(nr.std(ddof=1) / root), trials, variant, seed,
                            histogram=hist.tolist(), bin_edges=edges.tolist())
    if variant == "precon":
        rep.norm_bound = 1.0 - 1.0 / 160.0
    return rep


# --- spectral sandwich -------------------------------------------------------------

@dataclass
class SandwichReport:
    """Extreme generalized eigenvalues of sampled ``Z`` against ``Y`` over many draws.

    ``constant`` is the smallest ``c`` with every draw inside
    ``[1/(c·delta·log n), c·delta·log n]``.
    """

    lambda_min: list
    lambda_max: list
    delta: float
    log_n: float
    constant: float
    reference_constant: float
    failure_fraction: float
    trials: int
    seed: int

    @property
    def failures_at_constant(self) -> float:
        scale = self.constant * self.delta * self.log_n
        lo, hi = np.asarray(self.lambda_min), np.asarray(self.lambda_max)
        return float(np.mean((lo < 1.0 / scale * (1 - 1e-12)) | (hi > scale * (1 + 1e-12))))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["failures_at_constant"] = self.failures_at_constant
        return out


def verify_spectral_sandwich(g: WeightedGraph, t: SpanningTree, tau: StretchBounds, delta: float = 0.1,
                             trials: int = 200, *, seed: int = 0, reference_constant: float = 10.0,
                             base=None, max_n: int = 500) -> SandwichReport:
    """Measure how tightly sampled matrices approximate ``Y = L_g``.

    Draws ``Z = X + Σ (delta/tau_e) L_e`` with ``X = L_T`` (or ``base``)
    and tree edges counted with bound 1, then computes the generalized
    eigenvalues of ``(Z, Y)`` on the range of ``Y``.
    """
    n = g.n_vertices
    if n > max_n:
        raise ValueError(f"dense eigensolves limited to n <= {max_n}, got {n}")
    y = laplacian_of(g).toarray()
    vals, basis = _range_basis(y)
    whiten = basis / np.sqrt(vals)
    x_mat = laplacian_csr(n, t.u, t.v, t.weights).toarray() if base is None else _dense(base)
    tau_all = np.ones(g.n_edges)
    tau_all[tau.edge_ids] = tau.values
    rng = np.random.default_rng(seed)
    lo, hi = [], []
    for _ in range(trials):
        counts, _, _ = draw_counts(tau_all, delta, rng)
        keep = counts > 0
        z = x_mat + laplacian_csr(n, g.u[keep], g.v[keep],
                                  (counts * delta / tau_all * g.w)[keep]).toarray()
        ev = np.linalg.eigvalsh(whiten.T @ z @ whiten)
        lo.append(float(ev[0]))
        hi.append(float(ev[-1]))
    log_n = math.log(max(n, 2))
    scale = delta * log_n
    const = max(max(hi) / scale, 1.0 / (min(lo) * scale)) if trials else 0.0
    ref = reference_constant * scale
    fail = float(np.mean((np.asarray(lo) < 1.0 / ref) | (np.asarray(hi) > ref))) if trials else 0.0
    return SandwichReport(lo, hi, delta, log_n, float(const), reference_constant, fail, trials, seed)


# --- expectations of the resampling loop ------------------------------------------------

@dataclass
class PreconReport:
    mean_off_tree: float
    mean_loops: float
    mean_norm_ratio: float
    norm_p: float
    draws: int
    seed: int

    @property
    def off_tree_ratio(self) -> float:
        return self.mean_off_tree / self.norm_p if self.norm_p > 0 else 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["off_tree_ratio"] = self.off_tree_ratio
        return out


def verify_precon_expectations(g: WeightedGraph, t: SpanningTree, tau: StretchBounds, draws: int = 1000,
                               *, delta: float = 0.1, p: float = 0.9, seed: int = 0,
                               edge_factor: float = 4800.0, stretch_factor: float = 480.0) -> PreconReport:
    """Average size, new stretch norm and loop count of resampled preconditioners."""
    sampler = PreconSampler(g, t, tau, delta, p, edge_factor, stretch_factor)
    rng = np.random.default_rng(seed)
    off, loops, ratio = [], [], []
    norm = lp_stretch_norm(tau, p)
    for _ in range(draws):
        d = sampler.draw(rng)
        off.append(d.off_index.size)
        loops.append(d.loops)
        ratio.append(lp_stretch_norm(delta * d.off_counts.astype(float), p) / norm if norm else 0.0)
    return PreconReport(float(np.mean(off)), float(np.mean(loops)), float(np.mean(ratio)), norm,
                        draws, seed)


# --- scalar and matrix facts ---------------------------------------------------------------

def cheby_reference(i: int, x: float) -> tuple[float, float]:
    """``(T_i(x), U_i(x))`` by the three-term recurrences."""
    return cheby_t(i, x), cheby_u(i, x)


def harmonic_sum(a, b):
    """``1 / (1/a + 1/b)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return a * b / (a + b)


def check_harmonic_jensen(n_distributions: int = 1000, support: int = 5, seed: int = 0) -> dict:
    """``E[HrmSum(X, a)] <= HrmSum(E[X], a)`` on random discrete distributions."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(n_distributions):
        values = rng.exponential(1.0, support) + 1e-3
        probs = rng.dirichlet(np.ones(support))
        a = rng.exponential(1.0) + 1e-3
        lhs = float(probs @ harmonic_sum(values, a))
        rhs = float(harmonic_sum(probs @ values, a))
        worst = max(worst, lhs - rhs)
    return {"worst_gap": worst, "passed": worst <= 1e-12, "distributions": n_distributions}


def check_matrix_am_hm(n_ensembles: int = 200, dim: int = 5, size: int = 4, seed: int = 0) -> dict:
    """``(Σ w_i M_i⁻¹)⁻¹ ⪯ Σ w_i M_i`` for random positive definite ensembles."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(n_ensembles):
        w = rng.dirichlet(np.ones(size))
        mats = []
        for _ in range(size):
            a = rng.standard_normal((dim, dim))
            mats.append(a @ a.T + 1e-2 * np.eye(dim))
        hm = np.linalg.inv(sum(wi * np.linalg.inv(m) for wi, m in zip(w, mats)))
        am = sum(wi * m for wi, m in zip(w, mats))
        gap = np.linalg.eigvalsh(am - hm)[0] / np.linalg.norm(am, 2)
        worst = min(worst, float(gap))
    return {"worst_min_eigenvalue": worst, "passed": worst >= -1e-12, "ensembles": n_ensembles}


def check_sherman_morrison(trials: int = 100, dim: int = 6, seed: int = 0) -> dict:
    """Rank-one inverse update against dense re-inversion."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        a = rng.standard_normal((dim, dim))
        m = a @ a.T + np.eye(dim)
        u = rng.standard_normal(dim)
        minv = np.linalg.inv(m)
        mu = minv @ u
        update = minv - np.outer(mu, mu) / (1.0 + u @ mu)
        direct = np.linalg.inv(m + np.outer(u, u))
        worst = max(worst, float(np.abs(update - direct).max() / np.abs(direct).max()))
    return {"worst_relative_error": worst, "passed": worst <= 1e-10, "trials": trials}


CLAIMS = ("moments", "sandwich", "contraction", "cheby", "amhm")
