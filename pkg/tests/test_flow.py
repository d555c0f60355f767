import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_connected_graph
from sddsolve.config import SolverConfig
from sddsolve.flow import (Flow, FlowProblem, divergence, electrical_flow, flow_energy, flow_from_potentials,
                           residual, tree_route)
from sddsolve.graph import DenseOracle, WeightedGraph, incidence, laplacian_norm, laplacian_of
from sddsolve.trees import SpanningTree, low_stretch_tree


def _dual_norm(oracle, d):
    return math.sqrt(max(float(d @ oracle.pinv @ d), 0.0))


def _problem(g, seed):
    d = np.random.default_rng(seed).standard_normal(g.n_vertices)
    return FlowProblem(g, d - d.mean())


def test_ohms_law_examples(triangle):
    edge = FlowProblem(WeightedGraph(2, [0], [1], [0.5]), np.zeros(2))
    assert flow_from_potentials(edge, [1.0, 0.0]).values.tolist() == [0.5]
    assert np.array_equal(flow_from_potentials(edge, [3.0, 3.0]).values, [0.0])
    p = FlowProblem(triangle, np.array([1.0, -1.0, 0.0]))
    x = np.linalg.pinv(laplacian_of(triangle).toarray()) @ p.demand
    f = flow_from_potentials(p, x).values
    # edges (0,1), (1,2), (0,2)
    assert np.allclose(f, [2 / 3, -1 / 3, 1 / 3])
    assert np.allclose(residual(p, f), 0.0, atol=1e-15)


def test_energy_examples(triangle):
    edge = FlowProblem(WeightedGraph(2, [0], [1], [0.25]), np.zeros(2))
    assert flow_energy(edge, [1.0]) == 2.0
    assert flow_energy(edge, [0.0]) == 0.0
    p = FlowProblem(triangle, np.array([1.0, -1.0, 0.0]))
    x = np.linalg.pinv(laplacian_of(triangle).toarray()) @ p.demand
    assert flow_energy(p, flow_from_potentials(p, x)) == pytest.approx(math.sqrt(2 / 3), abs=1e-15)


def test_residual_examples(triangle):
    p = FlowProblem(triangle, np.array([1.0, -1.0, 0.0]))
    assert np.array_equal(residual(p, np.zeros(3)), p.demand)
    fbar = np.array([2 / 3, -1 / 3, 1 / 3])
    pert = fbar.copy()
    pert[0] += 1e-3
    col = incidence(triangle).B.toarray()[0]
    assert np.allclose(residual(p, pert), -1e-3 * col, atol=1e-15)


def test_problem_validation(triangle):
    with pytest.raises(ValueError, match="sums to"):
        FlowProblem(triangle, np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ValueError, match="shape"):
        FlowProblem(triangle, np.zeros(2))
    with pytest.raises(ValueError, match="non-finite"):
        Flow(np.array([np.inf]))
    # per-component balance is enough
    g = WeightedGraph(4, [0, 2], [1, 3], [1.0, 1.0])
    FlowProblem(g, np.array([1.0, -1.0, 2.0, -2.0]))
    with pytest.raises(ValueError, match="component"):
        FlowProblem(g, np.array([1.0, 1.0, -1.0, -1.0]))


@given(st.integers(2, 60), st.integers(0, 40), st.integers(0, 10_000))
def test_duality_with_exact_potentials(n, extra, seed):
    g = random_connected_graph(n, extra, seed)
    p = _problem(g, seed)
    oracle = DenseOracle(laplacian_of(g))
    f = flow_from_potentials(p, oracle.solve(p.demand))
    assert flow_energy(p, f) == pytest.approx(_dual_norm(oracle, p.demand), rel=1e-9, abs=1e-12)
    assert np.allclose(divergence(g, f), p.demand, atol=1e-9 * max(np.abs(p.demand).max(), 1))


@pytest.mark.parametrize("eps", [0.3, 0.1, 0.01])
@pytest.mark.parametrize("seed", range(3))
def test_inexact_potentials_bounds(eps, seed):
    g = random_connected_graph(50, 60, seed)
    p = _problem(g, seed)
    lap = laplacian_of(g)
    oracle = DenseOracle(lap)
    xbar = oracle.solve(p.demand)
    dnorm = _dual_norm(oracle, p.demand)
    noise = oracle.solve(np.random.default_rng(seed + 100).standard_normal(50))
    x = xbar + eps * dnorm / laplacian_norm(lap, noise) * noise
    f = flow_from_potentials(p, x)
    assert flow_energy(p, f) <= (1 + eps) * dnorm * (1 + 1e-12)
    assert _dual_norm(oracle, residual(p, f)) <= eps * dnorm * (1 + 1e-9)


def test_tree_route_examples():
    path = SpanningTree.from_graph(WeightedGraph(3, [0, 1], [1, 2], [1.0, 1.0]), [0, 1])
    assert tree_route(path, [1.0, 0.0, -1.0]).values.tolist() == [1.0, 1.0]
    assert tree_route(path, np.zeros(3)).values.tolist() == [0.0, 0.0]
    star = WeightedGraph(4, [0, 1, 2], [3, 3, 3], [1.0, 1.0, 1.0])
    f = tree_route(SpanningTree.from_graph(star, [0, 1, 2]), [1.0, 1.0, 1.0, -3.0])
    assert f.values.tolist() == [1.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        tree_route(path, [1.0, 0.0, 0.0])


@given(st.integers(2, 80), st.integers(0, 10_000))
def test_tree_route_meets_demand(n, seed):
    g = random_connected_graph(n, n // 2, seed)
    t = low_stretch_tree(g, method="mst")
    d = np.random.default_rng(seed).standard_normal(n)
    d -= d.mean()
    f = tree_route(t, d)
    assert np.abs(divergence(g, f) - d).max() <= 1e-12 * max(np.abs(d).sum(), 1)
    assert np.all(np.delete(f.values, t.edge_ids) == 0)


def test_electrical_flow_on_tree_is_exact():
    g = random_connected_graph(40, 0, 3)
    p = _problem(g, 3)
    f = electrical_flow(p, 0.1)
    exact = tree_route(low_stretch_tree(g), p.demand)
    assert np.allclose(f.values, exact.values, atol=1e-12)


def test_electrical_flow_triangle(triangle):
    p = FlowProblem(triangle, np.array([1.0, -1.0, 0.0]))
    f = electrical_flow(p, 1e-3)
    assert flow_energy(p, f) <= (1 + 1e-3) * math.sqrt(2 / 3)
    assert np.abs(residual(p, f)).max() <= 1e-12


@pytest.mark.parametrize("stage1", ["cubic-log", "half"])
def test_electrical_flow_random(stage1):
    g = random_connected_graph(300, 600, 9)
    p = _problem(g, 9)
    oracle = DenseOracle(laplacian_of(g))
    f = electrical_flow(p, 1e-2, SolverConfig(flow_stage1=stage1))
    opt = _dual_norm(oracle, p.demand)
    energy = flow_energy(p, f)
    assert opt - 1e-9 <= energy <= (1 + 1e-2) * opt
    assert np.abs(residual(p, f)).max() <= 1e-10 * np.abs(p.demand).max()


def test_electrical_flow_zero_demand_and_bad_eps(triangle):
    p = FlowProblem(triangle, np.zeros(3))
    assert np.array_equal(electrical_flow(p, 0.1).values, np.zeros(3))
    with pytest.raises(ValueError, match="eps"):
        electrical_flow(p, 0.0)


def test_electrical_flow_disconnected():
    g = WeightedGraph(5, [0, 1, 3, 0], [1, 2, 4, 2], [1.0, 2.0, 3.0, 1.0])
    p = FlowProblem(g, np.array([1.0, 0.0, -1.0, 0.5, -0.5]))
    f = electrical_flow(p, 1e-6)
    assert np.abs(residual(p, f)).max() <= 1e-12
    opt = _dual_norm(DenseOracle(laplacian_of(g)), p.demand)
    assert flow_energy(p, f) == pytest.approx(opt, rel=1e-6)


def test_flow_addition():
    assert (Flow(np.array([1.0, 2.0])) + Flow(np.array([0.5, -2.0]))).values.tolist() == [1.5, 0.0]
