"""Electrical flows from approximate potentials."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SolverConfig
from .graph import WeightedGraph, _project
from .recursive import top_solve
from .trees import SpanningTree, low_stretch_tree, subtree_demand


@dataclass(frozen=True, eq=False)
class FlowProblem:
    """A graph with resistances ``1/w`` and a demand summing to zero per component.

    ``demand[v]`` is the net amount leaving vertex ``v``.
    """

    graph: WeightedGraph
    demand: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.demand, dtype=np.float64)
        if d.shape != (self.graph.n_vertices,):
            raise ValueError(f"demand has shape {d.shape}, expected ({self.graph.n_vertices},)")
        if not np.all(np.isfinite(d)):
            raise ValueError("demand has non-finite entries")
        count, labels = self.graph.components
        sums = np.bincount(labels, weights=d, minlength=count)
        scale = max(float(np.abs(d).sum()), 1.0)
        if np.abs(sums).max(initial=0.0) > 1e-10 * scale:
            worst = int(np.argmax(np.abs(sums)))
            raise ValueError(f"demand sums to {sums[worst]:.6g} on component {worst}, expected 0")
        object.__setattr__(self, "demand", d)

    @property
    def resistance(self) -> np.ndarray:
        return 1.0 / self.graph.w


@dataclass(frozen=True, eq=False)
class Flow:
    """Signed flow per edge; positive values run from the smaller to the larger endpoint."""

    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(f)):
            raise ValueError("flow has non-finite entries")
        object.__setattr__(self, "values", f)

    def __add__(self, other: "Flow") -> "Flow":
        return Flow(self.values + other.values)


def _ends(g: WeightedGraph) -> tuple[np.ndarray, np.ndarray]:
    return np.minimum(g.u, g.v), np.maximum(g.u, g.v)


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, Flow) else np.asarray(f, dtype=np.float64)


def divergence(g: WeightedGraph, f) -> np.ndarray:
    """Net outflow ``Bᵀ f`` at every vertex."""
    f = _values(f)
    if f.shape != (g.n_edges,):
        raise ValueError(f"flow has shape {f.shape}, expected ({g.n_edges},)")
    lo, hi = _ends(g)
    n = g.n_vertices
    return np.bincount(lo, weights=f, minlength=n) - np.bincount(hi, weights=f, minlength=n)


def flow_from_potentials(p: FlowProblem, x) -> Flow:
    """Ohm's law: ``f_e = (x_lo − x_hi) / r_e``."""
    x = np.asarray(x, dtype=np.float64)
    g = p.graph
    if x.shape != (g.n_vertices,):
        raise ValueError(f"potentials have shape {x.shape}, expected ({g.n_vertices},)")
    lo, hi = _ends(g)
    return Flow(g.w * (x[lo] - x[hi]))


def flow_energy(p: FlowProblem, f) -> float:
    """``sqrt(Σ r_e f_e²)``."""
    f = _values(f)
    if f.shape != (p.graph.n_edges,):
        raise ValueError(f"flow has shape {f.shape}, expected ({p.graph.n_edges},)")
    return float(math.sqrt(np.sum(f * f / p.graph.w)))


def residual(p: FlowProblem, f) -> np.ndarray:
    """Unmet demand ``d − Bᵀ f``."""
    return p.demand - divergence(p.graph, f)


def tree_route(t: SpanningTree, demand, n_edges: int | None = None) -> Flow:
    """The unique flow on the tree edges meeting ``demand``.

    Parameters
    ----------
    t : SpanningTree
    demand : array_like
        Must sum to zero on every tree component.
    n_edges : int, optional
        Length of the returned flow vector; defaults to the size of the
        tree's source graph. Non-tree edges carry zero.
    """
    d = np.asarray(demand, dtype=np.float64)
    if d.shape != (t.n_vertices,):
        raise ValueError(f"demand has shape {d.shape}, expected ({t.n_vertices},)")
    sums = subtree_demand(t, d, rtol=1e-10)
    out = np.zeros(t.n_graph_edges if n_edges is None else n_edges)
    child = np.flatnonzero(t.parent >= 0)
    pe = t.parent_edge[child]
    # the subtree of `child` sends its surplus to the parent
    sign = np.where(child < t.parent[child], 1.0, -1.0)
    out[t.edge_ids[pe]] = sign * sums[child]
    return Flow(out)


def _solve_flow(p: FlowProblem, demand, eps: float, cfg: SolverConfig) -> Flow:
    x = top_solve(p.graph, demand, eps, cfg).x
    return flow_from_potentials(p, x)


def electrical_flow(p: FlowProblem, eps: float, cfg: SolverConfig | None = None,
                    tree: SpanningTree | None = None) -> Flow:
    """Approximate minimum-energy flow meeting the demand exactly.

    The flow from approximate potentials is corrected once by a second
    solve on its residual demand, and the remaining (tiny) residual is
    routed exactly over a maximum-weight spanning tree.

    Parameters
    ----------
    p : FlowProblem
    eps : float
        Target relative energy excess.
    cfg : SolverConfig
        ``flow_stage1`` picks the first-stage accuracy: ``eps / log³ n``
        (``"cubic-log"``) or ``eps / 2`` (``"half"``).
    tree : SpanningTree, optional
        Tree used for the final rerouting.
    """
    if not (isinstance(eps, (int, float)) and eps > 0 and math.isfinite(eps)):
        raise ValueError(f"eps must be a positive number, got {eps!r}")
    cfg = cfg or SolverConfig()
    g = p.graph
    if not np.any(p.demand):
        return Flow(np.zeros(g.n_edges))
    log_n = max(math.log(max(g.n_vertices, 2)), 1.0)
    eps1 = eps / log_n ** 3 if cfg.flow_stage1 == "cubic-log" else eps / 2.0
    count, labels = g.components
    f1 = _solve_flow(p, p.demand, min(eps1, 0.5), cfg)
    d1 = _project(residual(p, f1), labels, count)
    f = f1
    if np.any(d1):
        f = f + _solve_flow(p, d1, 1e-8, cfg)
    if tree is None:
        tree = low_stretch_tree(g, method="mst")
    d2 = residual(p, f)
    d2 = d2 - np.bincount(labels, weights=d2, minlength=count)[labels] / np.bincount(labels)[labels]
    return f + tree_route(tree, d2, g.n_edges)
