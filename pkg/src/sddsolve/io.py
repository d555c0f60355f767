"""Plain-text graph, vector and matrix files."""
from __future__ import annotations

import io as _io
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .graph import WeightedGraph
from .sampling import PreconTuple
from .trees import SpanningTree, StretchBounds


class InputError(ValueError):
    """A malformed input file."""


def _lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        yield from enumerate(fh, start=1)


def read_edge_list(path, n_vertices: int | None = None) -> WeightedGraph:
    """Read ``u v w`` lines (0-indexed, ``#`` comments).

    A comment line ``# vertices N`` fixes the vertex count, which
    otherwise is one more than the largest endpoint. A missing weight
    means 1.
    """
    us, vs, ws = [], [], []
    declared = n_vertices
    for lineno, raw in _lines(path):
        line = raw.strip()
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "vertices" and declared is None:
                declared = int(parts[1])
            continue
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise InputError(f"{path}:{lineno}: expected 'u v [w]', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        if u < 0 or v < 0:
            raise InputError(f"{path}:{lineno}: negative vertex id")
        if u == v:
            raise InputError(f"{path}:{lineno}: self-loop at vertex {u}")
        if not (np.isfinite(w) and w > 0):
            raise InputError(f"{path}:{lineno}: weight must be positive and finite, got {parts[2]}")
        us.append(u)
        vs.append(v)
        ws.append(w)
    top = max(max(us, default=-1), max(vs, default=-1)) + 1
    n = top if declared is None else declared
    if n < top:
        raise InputError(f"{path}: vertex id {top - 1} exceeds declared count {n}")
    return WeightedGraph(n, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64),
                         np.array(ws, dtype=np.float64))


def format_edge_list(g: WeightedGraph) -> str:
    out = _io.StringIO()
    out.write(f"# vertices {g.n_vertices}\n")
    for u, v, w in zip(g.u.tolist(), g.v.tolist(), g.w.tolist()):
        out.write(f"{u} {v} {w!r}\n")
    return out.getvalue()


def write_edge_list(path, g: WeightedGraph) -> None:
    Path(path).write_text(format_edge_list(g), encoding="utf-8")


def read_vector(path, length: int | None = None) -> np.ndarray:
    """One number per line; ``#`` comments and blank lines are ignored."""
    values = []
    for lineno, raw in _lines(path):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise InputError(f"{path}:{lineno}: not a number: {line!r}") from None
    vec = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise InputError(f"{path}: non-finite entry")
    if length is not None and vec.size != length:
        raise InputError(f"{path}: expected {length} entries, got {vec.size}")
    return vec


def format_vector(x) -> str:
    return "".join(f"{float(v)!r}\n" for v in np.asarray(x, dtype=np.float64).tolist())


def write_vector(path, x) -> None:
    Path(path).write_text(format_vector(x), encoding="utf-8")


def read_matrix_market(path) -> sp.csr_matrix:
    """Read a real square Matrix Market file (coordinate or array)."""
    try:
        m = scipy.io.mmread(str(path))
    except (ValueError, OSError) as exc:
        raise InputError(f"{path}: {exc}") from None
    m = sp.csr_matrix(m, dtype=np.float64)
    if m.shape[0] != m.shape[1]:
        raise InputError(f"{path}: matrix is {m.shape[0]}x{m.shape[1]}, expected square")
    return m


def write_matrix_market(path, m) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(m), symmetry="symmetric")


def read_tree_ids(path) -> np.ndarray:
    return read_vector(path).astype(np.int64)


def write_tree_ids(path, ids) -> None:
    Path(path).write_text("".join(f"{int(i)}\n" for i in np.asarray(ids).tolist()), encoding="utf-8")


def save_precon(prefix, pt: PreconTuple) -> None:
    """Write ``prefix.el``, ``prefix.tree`` and ``prefix.tau`` for a preconditioner."""
    write_edge_list(f"{prefix}.el", pt.graph)
    write_tree_ids(f"{prefix}.tree", pt.tree.edge_ids)
    write_vector(f"{prefix}.tau", pt.tau.values)


def load_precon(prefix) -> tuple[WeightedGraph, SpanningTree, StretchBounds]:
    """Inverse of :func:`save_precon`; off-tree edges follow the tree edges."""
    g = read_edge_list(f"{prefix}.el")
    ids = read_tree_ids(f"{prefix}.tree")
    t = SpanningTree.from_graph(g, ids)
    off = t.off_tree_ids()
    return g, t, StretchBounds(off, read_vector(f"{prefix}.tau", off.size))
