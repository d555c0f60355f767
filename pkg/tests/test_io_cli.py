import json
import math
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from sddsolve import io as sio
from sddsolve.cli import main
from sddsolve.generators import barbell, erdos_renyi, generate, grid2d, path_plus_random_chords, random_regular
from sddsolve.graph import WeightedGraph, laplacian_of
from sddsolve.report import RunReport, digest_bytes, validate_report
from sddsolve.sampling import PreconSampler
from sddsolve.trees import compute_stretch, low_stretch_tree

TRI = "0 1 1\n1 2 1\n0 2 1\n"


# --- file formats -----------------------------------------------------------------

def test_edge_list_round_trip(tmp_path):
    g = WeightedGraph(6, [0, 1, 3], [1, 2, 4], [0.1, 2.5, 1e-7])
    path = tmp_path / "g.el"
    sio.write_edge_list(path, g)
    back = sio.read_edge_list(path)
    # the vertex header keeps the isolated vertex 5
    assert back.n_vertices == 6
    assert np.array_equal(back.w, g.w) and np.array_equal(back.u, g.u)


def test_edge_list_defaults_and_comments(tmp_files):
    g = sio.read_edge_list(tmp_files("a.el", "# comment\n0 1\n\n1 2 3.5  # trailing\n"))
    assert g.n_vertices == 3 and g.w.tolist() == [1.0, 3.5]


@pytest.mark.parametrize("text,needle", [
    ("0 1 1\n0 1 2 3\n", ":2:"),
    ("0 1 1\n1 1 1\n", "self-loop"),
    ("0 1 -2\n", "positive"),
    ("0 x 1\n", ":1:"),
    ("-1 2 1\n", "negative"),
    ("# vertices 2\n0 5 1\n", "exceeds"),
])
def test_edge_list_errors(tmp_files, text, needle):
    with pytest.raises(sio.InputError, match=needle):
        sio.read_edge_list(tmp_files("bad.el", text))


def test_vector_round_trip_is_exact(tmp_path):
    x = np.array([1 / 3, -2e-300, 12345.678, 0.0])
    sio.write_vector(tmp_path / "x.txt", x)
    assert np.array_equal(sio.read_vector(tmp_path / "x.txt"), x)


def test_vector_errors(tmp_files):
    with pytest.raises(sio.InputError, match=":2:"):
        sio.read_vector(tmp_files("v.txt", "1\nabc\n"))
    with pytest.raises(sio.InputError, match="expected 3"):
        sio.read_vector(tmp_files("w.txt", "1\n2\n"), 3)
    with pytest.raises(sio.InputError, match="non-finite"):
        sio.read_vector(tmp_files("n.txt", "1\nnan\n"))


def test_matrix_market_round_trip(tmp_path):
    a = sp.csr_matrix(np.array([[2.0, -1.0, 0.0], [-1.0, 3.0, -0.5], [0.0, -0.5, 1.0]]))
    sio.write_matrix_market(tmp_path / "a.mtx", a)
    assert np.array_equal(sio.read_matrix_market(tmp_path / "a.mtx").toarray(), a.toarray())


def test_precon_round_trip(tmp_path):
    g = path_plus_random_chords(60, 10, seed=1)
    t = low_stretch_tree(g)
    tau = compute_stretch(g, t)
    pt = PreconSampler(g, t, tau).to_tuple(PreconSampler(g, t, tau).draw(np.random.default_rng(0)))
    sio.save_precon(tmp_path / "h", pt)
    h, th, tauh = sio.load_precon(tmp_path / "h")
    assert np.allclose(laplacian_of(h).toarray(), laplacian_of(pt.graph).toarray(), rtol=0, atol=1e-15)
    assert np.array_equal(np.sort(th.edge_ids), np.sort(pt.tree.edge_ids))
    assert np.array_equal(tauh.values, pt.tau.values)


# --- generators -------------------------------------------------------------------

def test_generator_counts():
    g = grid2d(3, 3)
    assert (g.n_vertices, g.n_edges) == (9, 12)
    b = barbell(5)
    assert (b.n_vertices, b.n_edges) == (10, 21)
    r = random_regular(20, 3, seed=1)
    assert np.all(np.bincount(np.concatenate([r.u, r.v]), minlength=20) == 3)
    p = path_plus_random_chords(30, 5, seed=2)
    assert p.n_edges == 34 and p.components[0] == 1


def test_generator_determinism():
    a = sio.format_edge_list(erdos_renyi(50, 0.2, seed=7))
    b = sio.format_edge_list(erdos_renyi(50, 0.2, seed=7))
    assert a == b and a != sio.format_edge_list(erdos_renyi(50, 0.2, seed=8))


def test_generator_errors():
    with pytest.raises(ValueError):
        random_regular(7, 3)
    with pytest.raises(ValueError, match="unknown"):
        generate("torus", 3)


# --- reports ----------------------------------------------------------------------

def test_report_digest_ignores_timings():
    a = RunReport("solve", digest_bytes(b"x"), {"eps": 1e-8}, 0, timings={"total": 1.0}, metrics={"r": 0.5})
    b = RunReport("solve", digest_bytes(b"x"), {"eps": 1e-8}, 0, timings={"total": 9.0}, metrics={"r": 0.5})
    assert a.digest() == b.digest() and a.to_json() != b.to_json()
    validate_report(a.to_dict())


def test_report_replaces_non_finite():
    data = RunReport("flow", "d", {}, 0, metrics={"x": math.inf, "y": np.float64(2.0)}).to_dict()
    assert data["metrics"] == {"x": None, "y": 2.0}


# --- command line -----------------------------------------------------------------

def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_solve_triangle(capsys, tmp_files, tmp_path):
    rep = tmp_path / "r.json"
    code, out, _ = _run(capsys, "solve", "--graph", tmp_files("tri.el", TRI), "--rhs", tmp_files("b.txt", "1\n-1\n0\n"),
                        "--eps", "1e-8", "--report", rep)
    assert code == 0
    x = np.array([float(v) for v in out.split()])
    # dense pseudoinverse of the unit triangle
    assert np.allclose(x, [1 / 3, -1 / 3, 0.0], atol=1e-10)
    data = json.loads(rep.read_text())
    validate_report(data)
    assert data["metrics"]["oracle_error"] <= 1e-8 and data["metrics"]["residual"] <= 1e-8
    assert data["config"]["eps"] == 1e-8 and data["exit_status"] == 0


def test_cli_solve_sdd(capsys, tmp_path, tmp_files):
    a = sp.csr_matrix(np.array([[3.0, -1.0, 0.0], [-1.0, 3.0, -1.0], [0.0, -1.0, 2.0]]))
    sio.write_matrix_market(tmp_path / "a.mtx", a)
    code, out, _ = _run(capsys, "solve", "--sdd", tmp_path / "a.mtx", "--rhs", tmp_files("b.txt", "1\n2\n3\n"))
    assert code == 0
    assert np.allclose([float(v) for v in out.split()], np.linalg.solve(a.toarray(), [1, 2, 3]), atol=1e-7)


def test_cli_solve_trace(capsys, tmp_files, tmp_path):
    g = path_plus_random_chords(40, 6, seed=0)
    trace = tmp_path / "t.jsonl"
    code, _, _ = _run(capsys, "solve", "--graph", tmp_files("g.el", sio.format_edge_list(g)),
                      "--rhs", tmp_files("b.txt", "1\n" + "0\n" * 38 + "-1\n"), "--trace", trace,
                      "--out", tmp_path / "x.txt")
    assert code == 0
    rows = [json.loads(line) for line in trace.read_text().splitlines()]
    assert rows and all(r["label"] == "outer" for r in rows)


def test_cli_solve_input_errors(capsys, tmp_files, tmp_path):
    rhs = tmp_files("b.txt", "1\n-1\n0\n")
    code, _, err = _run(capsys, "solve", "--graph", tmp_path / "missing.el", "--rhs", rhs)
    assert code == 2 and "cannot read" in err
    code, _, err = _run(capsys, "solve", "--graph", tmp_files("bad.el", "0 1 1\n2 2 1\n"), "--rhs", rhs)
    assert code == 2 and "self-loop" in err
    code, _, err = _run(capsys, "solve", "--graph", tmp_files("tri.el", TRI), "--rhs", tmp_files("s.txt", "1\n2\n"))
    assert code == 2 and "expected 3" in err
    with pytest.raises(SystemExit) as info:
        main(["solve", "--graph", tmp_files("tri.el", TRI), "--rhs", rhs, "--eps", "0"])
    assert info.value.code == 2
    code, _, err = _run(capsys, "solve", "--graph", tmp_files("tri.el", TRI), "--rhs", rhs, "--p", "2")
    assert code == 2


def test_cli_solve_reports_are_reproducible(capsys, tmp_files, tmp_path):
    g = erdos_renyi(80, 0.1, seed=3)
    b = np.random.default_rng(0).standard_normal(80)
    args = ["solve", "--graph", tmp_files("g.el", sio.format_edge_list(g)),
            "--rhs", tmp_files("b.txt", sio.format_vector(b - b.mean())), "--seed", "4"]
    outs, digests = [], []
    for k in range(2):
        rep = tmp_path / f"r{k}.json"
        code, out, _ = _run(capsys, *args, "--report", rep)
        assert code == 0
        data = json.loads(rep.read_text())
        data.pop("timings")
        outs.append(out)
        digests.append(json.dumps(data, sort_keys=True))
    assert outs[0] == outs[1] and digests[0] == digests[1]


def test_cli_flow(capsys, tmp_files, tmp_path):
    el = tmp_files("tri.el", TRI)
    rep = tmp_path / "f.json"
    code, out, _ = _run(capsys, "flow", "--graph", el, "--demand", tmp_files("d.txt", "1\n-1\n0\n"),
                        "--eps", "1e-3", "--report", rep)
    assert code == 0 and len(out.split()) == 3
    data = json.loads(rep.read_text())
    validate_report(data)
    assert abs(data["metrics"]["energy"] - math.sqrt(2 / 3)) <= 1e-3
    assert data["metrics"]["optimal_energy"] == pytest.approx(math.sqrt(2 / 3), rel=1e-12)

    code, out, _ = _run(capsys, "flow", "--graph", el, "--demand", tmp_files("z.txt", "0\n0\n0\n"))
    assert code == 0 and [float(v) for v in out.split()] == [0.0, 0.0, 0.0]

    code, _, err = _run(capsys, "flow", "--graph", el, "--demand", tmp_files("u.txt", "1\n0\n0\n"))
    assert code == 2 and "sums to" in err


def test_cli_generate(capsys, tmp_path):
    code, out, _ = _run(capsys, "generate", "grid2d", "3", "3")
    assert code == 0
    g = sio.read_edge_list(_write(tmp_path / "g.el", out))
    assert (g.n_vertices, g.n_edges) == (9, 12)
    _, a, _ = _run(capsys, "generate", "erdos_renyi", "50", "0.2", "--seed", "7")
    _, b, _ = _run(capsys, "generate", "erdos_renyi", "50", "0.2", "--seed", "7")
    assert a == b
    code, _, err = _run(capsys, "generate", "random_regular", "7", "3")
    assert code == 2
    code, _, err = _run(capsys, "generate", "grid2d", "abc")
    assert code == 2 and "bad parameter" in err


def _write(path, text):
    path.write_text(text)
    return path


def test_cli_bench_empty_suite(capsys, tmp_path):
    rep = tmp_path / "b.json"
    code, out, _ = _run(capsys, "bench", "empty", "--report", rep)
    # header only
    assert code == 0 and len(out.splitlines()) == 1 and out.startswith("suite,")
    data = json.loads(rep.read_text())
    validate_report(data)
    assert data["metrics"]["rows"] == []


def test_cli_bench_kappa(capsys, tmp_path):
    rep = tmp_path / "k.json"
    code, out, _ = _run(capsys, "bench", "kappa", "--report", rep)
    assert code == 0
    exponent = json.loads(rep.read_text())["metrics"]["exponent"]
    assert 0.4 <= exponent <= 0.6
    assert len(out.strip().splitlines()) == 5


def test_bench_single_instance(monkeypatch):
    from sddsolve import bench
    monkeypatch.setitem(bench.SUITES, "one", ("grid2d", [(8,)]))
    rows = bench.solver_suite("one", eps=1e-6)
    assert len(rows) == 1
    assert {"n", "m", "norm_p", "cheby_iterations", "inner_iterations", "wall"} <= set(rows[0])


@pytest.mark.parametrize("claim", ["moments", "amhm", "cheby"])
def test_cli_validate(capsys, claim):
    code, out, _ = _run(capsys, "validate", "--claim", claim)
    assert code == 0
    data = json.loads(out)
    validate_report(data)
    assert data["metrics"]["passed"] and data["metrics"]["claim"] == claim


def test_cli_validate_contraction(capsys, tmp_files):
    el = tmp_files("c.el", "0 1 1\n1 2 1\n2 3 1\n0 3 1\n")
    code, out, _ = _run(capsys, "validate", "--claim", "contraction", "--graph", el, "--trials", "2000")
    assert code == 0
    assert json.loads(out)["metrics"]["passed"]


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sddsolve.cli", "generate", "barbell", "5"],
                          capture_output=True, text=True, check=True)
    assert sio.read_edge_list(_write(tmp_path / "b.el", proc.stdout)).n_edges == 21
    proc = subprocess.run([sys.executable, "-m", "sddsolve.cli", "solve", "--graph", tmp_path / "no.el",
                           "--rhs", tmp_path / "no.txt"], capture_output=True, text=True)
    assert proc.returncode == 2 and "error" in proc.stderr
