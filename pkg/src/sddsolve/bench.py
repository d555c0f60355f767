"""Iteration-count benchmarks."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy.sparse as sp

from .config import SolverConfig
from .generators import FAMILIES
from .graph import DenseOracle, laplacian_of
from .iterative import IterationTrace, SolverOperator, precon_cheby
from .recursive import top_solve

COLUMNS = ("suite", "instance", "n", "m", "norm_p", "kappa", "cheby_iterations", "inner_iterations",
           "outer_iterations", "error", "wall")


def diagonal_cheby_iterations(kappa: float, n: int = 400, eps: float = 1e-6, seed: int = 0) -> int:
    """Chebyshev steps until the ``A``-norm error drops below ``eps``.

    ``A`` is diagonal and the exact preconditioner ``B = A·S`` has
    relative spectrum spread over ``[1, κ]``, endpoints included.
    """
    rng = np.random.default_rng(seed)
    a_diag = rng.uniform(1.0, 2.0, n)
    s = np.linspace(1.0, kappa, n)
    a = sp.diags(a_diag)
    b_diag = a_diag * s
    rhs = rng.standard_normal(n)
    exact = rhs / a_diag
    ref = math.sqrt(exact @ (a_diag * exact))
    trace = IterationTrace(error_fn=lambda x: math.sqrt((x - exact) @ (a_diag * (x - exact))) / ref)
    solve_b = SolverOperator(lambda r, e: r / b_diag, name="exact")
    # run well past the predicted count, then read off the first crossing
    precon_cheby(a, sp.diags(b_diag), solve_b, rhs, kappa, eps * 1e-3, inner_eps=0.0, trace=trace)
    errors = np.asarray(trace.error)
    hit = np.flatnonzero(errors <= eps)
    return int(hit[0]) + 1 if hit.size else len(errors)


def fit_exponent(xs, ys) -> float:
    """Slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def kappa_suite(kappas=(4, 16, 64, 256), eps: float = 1e-6, n: int = 400) -> tuple[list, float]:
    rows = []
    for k in kappas:
        t0 = time.perf_counter()
        it = diagonal_cheby_iterations(k, n, eps)
        rows.append({"suite": "kappa", "instance": f"kappa={k}", "n": n, "m": 0, "norm_p": None,
                     "kappa": float(k), "cheby_iterations": it, "inner_iterations": it,
                     "outer_iterations": 0, "error": None, "wall": time.perf_counter() - t0})
    exponent = fit_exponent(kappas, [r["cheby_iterations"] for r in rows]) if len(rows) > 1 else float("nan")
    return rows, exponent


def _solve_instance(args):
    family, params, seed, eps, cfg_dict = args
    g = FAMILIES[family](*params, seed=seed)
    cfg = SolverConfig(**cfg_dict)
    b = np.random.default_rng(seed).standard_normal(g.n_vertices)
    b -= b.mean()
    t0 = time.perf_counter()
    res = top_solve(g, b, eps, cfg)
    wall = time.perf_counter() - t0
    err = None
    if g.n_vertices <= 2000:
        count, labels = g.components
        err = DenseOracle(laplacian_of(g)).relative_error(res.x, b - (np.bincount(labels, b) / np.bincount(labels))[labels])
    lv = res.stats.levels
    return {"suite": family, "instance": f"{family}{tuple(params)}/seed={seed}", "n": g.n_vertices,
            "m": g.n_edges, "norm_p": res.norm_p,
            "kappa": max((x.kappa for x in lv.values()), default=1.0),
            "cheby_iterations": sum(x.cheby_iterations for x in lv.values()),
            "inner_iterations": res.stats.inner_iterations,
            "outer_iterations": res.stats.outer_iterations, "error": err, "wall": wall}


SUITES = {
    "path-chords": ("path_plus_random_chords", [(520, 55), (600, 60)]),
    "grid": ("grid2d", [(10,), (20,), (30,)]),
    "regular": ("random_regular", [(200, 3), (400, 3)]),
    "empty": (None, []),
}


def solver_suite(name: str, *, eps: float = 1e-6, seeds=(0,), cfg: SolverConfig | None = None,
                 jobs: int = 1) -> list:
    family, instances = SUITES[name]
    cfg = cfg or SolverConfig()
    tasks = [(family, params, s, eps, cfg.to_dict()) for params in instances for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_solve_instance, tasks))
    return [_solve_instance(t) for t in tasks]


def to_csv(rows) -> str:
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return out.getvalue()
