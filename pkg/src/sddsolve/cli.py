"""Command-line interface: ``sddsolve {solve,flow,validate,generate,bench}``."""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import io as sio
from .config import SolverConfig
from .errors import NonConvergenceError
from .generators import FAMILIES, generate as make_graph
from .graph import DenseOracle, laplacian_of, matvec
from .iterative import IterationTrace
from .report import RunReport, digest_bytes

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 2, 3
ORACLE_LIMIT = 2000


class UsageError(Exception):
    pass


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {text}")
    return v


def _config(args) -> SolverConfig:
    fields = {"seed": args.seed}
    for name in ("p", "delta", "tree", "c", "inner_rule", "eps0", "flow_stage1"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    try:
        return SolverConfig(**fields)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _emit(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_report(args, report: RunReport) -> None:
    if getattr(args, "report", None):
        Path(args.report).write_text(report.to_json(), encoding="utf-8")


def _write_trace(args, trace: IterationTrace | None) -> None:
    if trace is None or not getattr(args, "trace", None):
        return
    if args.trace == "-":
        sys.stderr.write(trace.to_jsonl())
    else:
        Path(args.trace).write_text(trace.to_jsonl(), encoding="utf-8")


# --- solve -----------------------------------------------------------------------

def cmd_solve(args) -> int:
    from .recursive import top_solve

    cfg = _config(args)
    raw = _read_bytes(args.graph or args.sdd)
    rhs_raw = _read_bytes(args.rhs)
    try:
        if args.graph:
            g = sio.read_edge_list(args.graph)
            problem, n, lap = g, g.n_vertices, laplacian_of(g)
        else:
            m = sio.read_matrix_market(args.sdd)
            problem, n, lap = m, m.shape[0], m
        b = sio.read_vector(args.rhs, n)
    except (ValueError, sio.InputError) as exc:
        raise UsageError(str(exc)) from None
    trace = IterationTrace(label="outer") if args.trace else None
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            res = top_solve(problem, b, args.eps, cfg, trace=trace)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    wall = time.perf_counter() - t0
    x = res.x
    if args.graph:
        # residual against the consistent part of b
        count, labels = g.components
        b_eff = b - (np.bincount(labels, b, minlength=count) / np.bincount(labels, minlength=count))[labels]
    else:
        b_eff = b
    resid_vec = matvec(lap, x) - b_eff
    denom = float(np.linalg.norm(b_eff))
    metrics = {"residual": float(np.linalg.norm(resid_vec)) / denom if denom > 0 else 0.0,
               "inconsistent_rhs": res.inconsistent,
               "warnings": [str(w.message) for w in caught],
               "n": res.n, "m": res.m, "norm_p": res.norm_p, "total_stretch": res.total_stretch}
    if n <= ORACLE_LIMIT:
        if args.graph:
            metrics["oracle_error"] = DenseOracle(lap).relative_error(x, b_eff)
        else:
            dense = lap.toarray()
            exact = np.linalg.lstsq(dense, b, rcond=None)[0]
            metrics["oracle_error"] = float(np.linalg.norm(x - exact) / max(np.linalg.norm(exact), 1e-300))
    _emit(args.out, sio.format_vector(x))
    stats = res.stats.to_dict()
    report = RunReport("solve", digest_bytes(raw, rhs_raw), cfg.to_dict() | {"eps": args.eps}, cfg.seed,
                       timings=dict(res.timings, total=wall),
                       counts={"outer_iterations": stats["outer_iterations"],
                               "inner_iterations": stats["inner_iterations"],
                               "restarts": stats["restarts"], "levels": stats["levels"]},
                       metrics=metrics)
    _write_report(args, report)
    _write_trace(args, trace)
    return EXIT_OK


# --- flow ------------------------------------------------------------------------

def cmd_flow(args) -> int:
    from .flow import FlowProblem, electrical_flow, flow_energy, residual

    cfg = _config(args)
    raw = _read_bytes(args.graph)
    dem_raw = _read_bytes(args.demand)
    try:
        g = sio.read_edge_list(args.graph)
        d = sio.read_vector(args.demand, g.n_vertices)
        problem = FlowProblem(g, d)
    except (ValueError, sio.InputError) as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    f = electrical_flow(problem, args.eps, cfg)
    wall = time.perf_counter() - t0
    energy = flow_energy(problem, f)
    metrics = {"energy": energy,
               "residual_inf": float(np.abs(residual(problem, f)).max(initial=0.0))}
    if g.n_vertices <= ORACLE_LIMIT:
        opt = DenseOracle(laplacian_of(g)).norm(DenseOracle(laplacian_of(g)).solve(d)) if np.any(d) else 0.0
        metrics["optimal_energy"] = opt
        metrics["oracle_gap"] = energy / opt - 1.0 if opt > 0 else 0.0
    _emit(args.out, sio.format_vector(f.values))
    report = RunReport("flow", digest_bytes(raw, dem_raw), cfg.to_dict() | {"eps": args.eps}, cfg.seed,
                       timings={"total": wall}, metrics=metrics)
    _write_report(args, report)
    return EXIT_OK


# --- validate ---------------------------------------------------------------------

def _validation_graph(args):
    if args.graph:
        try:
            return sio.read_edge_list(args.graph)
        except (ValueError, sio.InputError) as exc:
            raise UsageError(str(exc)) from None
    from .generators import barbell
    return barbell(6, 0, seed=args.seed)


def cmd_validate(args) -> int:
    from . import validation as val
    from .trees import compute_stretch, low_stretch_tree

    t0 = time.perf_counter()
    claim = args.claim
    if claim == "moments":
        decomps = [val.diagonal_decomposition([0.5, 0.5], [1, 1]),
                   val.diagonal_decomposition([1, 0.5, 0.25], [1, 1, 1]),
                   val.diagonal_decomposition([0.2], [1.0]),
                   val.diagonal_decomposition([1, 1], [2, 3], tau=[2, 3]),
                   val.diagonal_decomposition([0.3, 0.6, 0.9], [1, 2, 3])]
        reports = [val.verify_moments(dec, args.delta or 0.1).to_dict() for dec in decomps]
        metrics = {"instances": reports, "passed": all(r["passed"] for r in reports)}
    elif claim in ("sandwich", "contraction"):
        g = _validation_graph(args)
        t = low_stretch_tree(g, seed=args.seed)
        tau = compute_stretch(g, t)
        trials = args.trials or (200 if claim == "sandwich" else 10_000)
        if claim == "sandwich":
            rep = val.verify_spectral_sandwich(g, t, tau, args.delta or 0.1, trials, seed=args.seed)
            metrics = rep.to_dict() | {"passed": rep.failures_at_constant == 0.0 and rep.constant <= 20}
        else:
            rep = val.verify_expected_contraction(g, t, tau, trials, seed=args.seed)
            metrics = rep.to_dict()
    elif claim == "cheby":
        rows, exponent = bench_mod.kappa_suite((4, 16, 64))
        checks = {"T2(1.5)": val.cheby_reference(2, 1.5)[0], "U2(0.5)": val.cheby_reference(2, 0.5)[1]}
        metrics = {"rows": rows, "exponent": exponent, "values": checks,
                   "passed": abs(exponent - 0.5) <= 0.1}
    elif claim == "amhm":
        parts = {"am_hm": val.check_matrix_am_hm(seed=args.seed),
                 "harmonic_jensen": val.check_harmonic_jensen(seed=args.seed),
                 "sherman_morrison": val.check_sherman_morrison(seed=args.seed)}
        metrics = parts | {"passed": all(p["passed"] for p in parts.values())}
    else:  # pragma: no cover - argparse restricts the choices
        raise UsageError(f"unknown claim {claim}")
    metrics["claim"] = claim
    report = RunReport("validate", digest_bytes(claim.encode(), str(args.seed).encode()),
                       {"claim": claim, "trials": args.trials, "delta": args.delta}, args.seed,
                       timings={"total": time.perf_counter() - t0}, metrics=metrics)
    _emit(args.report, report.to_json())
    return EXIT_OK


# --- generate ---------------------------------------------------------------------

def _parse_param(text: str):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            raise UsageError(f"bad parameter {text!r}") from None


def cmd_generate(args) -> int:
    params = [_parse_param(p) for p in args.params]
    options = {"weights": args.weights} if args.weights else {}
    try:
        g = make_graph(args.kind, *params, seed=args.seed, **options)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    _emit(args.out, sio.format_edge_list(g))
    return EXIT_OK


# --- bench ------------------------------------------------------------------------

def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    cfg = _config(args)
    exponent = None
    if args.suite == "kappa":
        rows, exponent = bench_mod.kappa_suite()
    else:
        rows = bench_mod.solver_suite(args.suite, eps=args.eps, seeds=tuple(range(args.seeds)),
                                      cfg=cfg, jobs=args.jobs)
    _emit(args.out, bench_mod.to_csv(rows))
    if args.report:
        report = RunReport("bench", digest_bytes(args.suite.encode()), cfg.to_dict(), cfg.seed,
                           timings={"total": time.perf_counter() - t0},
                           metrics={"rows": [{k: v for k, v in r.items() if k != "wall"} for r in rows],
                                    "exponent": exponent})
        _write_report(args, report)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------

def _add_solver_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, help="stretch norm exponent (default 0.9)")
    p.add_argument("--delta", type=float, help="sampling parameter (default 0.1)")
    p.add_argument("--tree", choices=("lsst", "mst"))
    p.add_argument("--c", type=float, help="condition number constant (default 1)")
    p.add_argument("--inner-rule", dest="inner_rule", choices=("literal", "derived"),
                   help="Chebyshev inner accuracy rule")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sddsolve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a Laplacian or SDD system")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="edge list file (u v w per line)")
    src.add_argument("--sdd", help="Matrix Market file with an SDD matrix")
    p.add_argument("--rhs", required=True, help="right-hand side, one value per line")
    p.add_argument("--eps", type=_positive_float, default=1e-8)
    p.add_argument("--out", default="-", help="solution file (default stdout)")
    p.add_argument("--trace", nargs="?", const="-", help="write per-iteration JSON lines (default stderr)")
    p.add_argument("--report", help="JSON run report path")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("flow", help="approximate electrical flow for a demand vector")
    p.add_argument("--graph", required=True)
    p.add_argument("--demand", required=True)
    p.add_argument("--eps", type=_positive_float, default=1e-3)
    p.add_argument("--out", default="-", help="flow file, one value per edge in input order")
    p.add_argument("--report")
    p.add_argument("--stage1", dest="flow_stage1", choices=("cubic-log", "half"))
    _add_solver_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("validate", help="empirical checks of the sampling bounds")
    p.add_argument("--claim", required=True, choices=("moments", "sandwich", "contraction", "cheby", "amhm"))
    p.add_argument("--graph", help="edge list for sandwich/contraction (default: small barbell)")
    p.add_argument("--trials", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default="-", help="JSON report path (default stdout)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", help="write a synthetic graph as an edge list")
    p.add_argument("kind", choices=sorted(FAMILIES))
    p.add_argument("params", nargs="*", help="family parameters, e.g. 'grid2d 10 10'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", choices=("unit", "uniform", "lognormal"))
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="iteration-count benchmarks (CSV output)")
    p.add_argument("suite", choices=("kappa",) + tuple(bench_mod.SUITES))
    p.add_argument("--eps", type=_positive_float, default=1e-6)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-")
    p.add_argument("--report")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sddsolve: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonConvergenceError as exc:
        details = {k: v for k, v in exc.details.items() if isinstance(v, (int, float, str, list))}
        print(f"sddsolve: did not converge: {exc}", file=sys.stderr)
        if details:
            print(json.dumps(details, default=str), file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
