"""Compiled loops for tree traversal, elimination and substitution.

Everything here works on plain integer/float arrays so it can be jitted
with numba. Trees are given as CSR adjacency (``indptr``, ``indices``)
plus ``slot_edge`` which maps each adjacency slot to a tree-edge index.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def bfs_forest(n, indptr, indices, slot_edge, priority):
    """Breadth-first traversal of a forest.

    Roots are picked in the order given by ``priority``; each unvisited
    vertex in that list starts a new component.

    Returns
    -------
    order, parent, parent_slot_edge, root_of, visited_edges
    """
    parent = np.full(n, -1, dtype=np.int64)
    pedge = np.full(n, -1, dtype=np.int64)
    root_of = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.bool_)
    head = 0
    tail = 0
    for idx in range(priority.shape[0]):
        s = priority[idx]
        if visited[s]:
            continue
        visited[s] = True
        root_of[s] = s
        order[tail] = s
        tail += 1
        while head < tail:
            v = order[head]
            head += 1
            for k in range(indptr[v], indptr[v + 1]):
                u = indices[k]
                if not visited[u]:
                    visited[u] = True
                    parent[u] = v
                    pedge[u] = slot_edge[k]
                    root_of[u] = s
                    order[tail] = u
                    tail += 1
    return order[:tail], parent, pedge, root_of


@njit(cache=True)
def subtree_sums(order, parent, b):
    """Sum of ``b`` over each rooted subtree."""
    s = b.copy()
    for i in range(order.shape[0] - 1, -1, -1):
        v = order[i]
        p = parent[v]
        if p >= 0:
            s[p] += s[v]
    return s


@njit(cache=True)
def potentials_from_sums(order, parent, parent_weight, sums):
    """Root-anchored potentials of the tree system given subtree sums."""
    x = np.zeros(order.shape[0])
    for i in range(order.shape[0]):
        v = order[i]
        p = parent[v]
        if p >= 0:
            x[v] = x[p] + sums[v] / parent_weight[v]
    return x


@njit(cache=True)
def eliminate_tree(n, indptr, indices, slot_edge, tree_weight, terminal):
    """Greedy elimination of tree vertices of degree one and two.

    The forest is re-rooted so that each component with a terminal is
    rooted at its smallest terminal. Vertices are then visited leaves
    first; a non-terminal vertex with no surviving children is a leaf
    pivot, one with exactly one surviving child is a series pivot that
    splices the child onto its parent with the harmonic weight.

    Returns
    -------
    ops_vertex, ops_pivot, ops_nb1, ops_w1, ops_nb2, ops_w2 : arrays
        Elimination sequence (first ``n_ops`` entries are valid).
    n_ops : int
    parent, parent_weight : arrays
        Final parent pointers and weights of the surviving forest.
    status : int8 array
        0 kept, 1 eliminated, 2 null (last vertex of a terminal-free part).
    root_of : array
        Root of each vertex's component in the re-rooted forest.
    """
    priority = np.empty(n, dtype=np.int64)
    k = 0
    for v in range(n):
        if terminal[v]:
            priority[k] = v
            k += 1
    for v in range(n):
        if not terminal[v]:
            priority[k] = v
            k += 1
    order, parent, pedge, root_of = bfs_forest(n, indptr, indices, slot_edge, priority)

    pw = np.zeros(n)
    nchild = np.zeros(n, dtype=np.int64)
    for v in range(n):
        if parent[v] >= 0:
            pw[v] = tree_weight[pedge[v]]
            nchild[parent[v]] += 1

    alive_child = np.full(n, -1, dtype=np.int64)
    status = np.zeros(n, dtype=np.int8)
    ops_vertex = np.empty(n, dtype=np.int64)
    ops_pivot = np.empty(n)
    ops_nb1 = np.empty(n, dtype=np.int64)
    ops_w1 = np.empty(n)
    ops_nb2 = np.empty(n, dtype=np.int64)
    ops_w2 = np.empty(n)
    n_ops = 0
    for i in range(n - 1, -1, -1):
        v = order[i]
        p = parent[v]
        if p < 0:
            if (not terminal[v]) and nchild[v] == 0:
                status[v] = 2
            continue
        if terminal[v] or nchild[v] >= 2:
            alive_child[p] = v
            continue
        if nchild[v] == 0:
            ops_vertex[n_ops] = v
            ops_pivot[n_ops] = pw[v]
            ops_nb1[n_ops] = p
            ops_w1[n_ops] = pw[v]
            ops_nb2[n_ops] = -1
            ops_w2[n_ops] = 0.0
            n_ops += 1
            nchild[p] -= 1
        else:
            c = alive_child[v]
            wc = pw[c]
            wp = pw[v]
            d = wc + wp
            ops_vertex[n_ops] = v
            ops_pivot[n_ops] = d
            ops_nb1[n_ops] = c
            ops_w1[n_ops] = wc
            ops_nb2[n_ops] = p
            ops_w2[n_ops] = wp
            n_ops += 1
            parent[c] = p
            pw[c] = wc * wp / d
            alive_child[p] = c
        status[v] = 1
    return (ops_vertex, ops_pivot, ops_nb1, ops_w1, ops_nb2, ops_w2, n_ops,
            parent, pw, status, root_of)


@njit(cache=True)
def forward_substitute(b, ops_vertex, ops_pivot, ops_nb1, ops_w1, ops_nb2, ops_w2, n_ops):
    """Apply the inverse transpose of the elimination factor.

    Returns the eliminated-block values ``y`` and the updated right-hand
    side whose surviving entries form the reduced system.
    """
    work = b.copy()
    y = np.zeros(b.shape[0])
    for j in range(n_ops):
        v = ops_vertex[j]
        d = ops_pivot[j]
        bv = work[v]
        y[v] = bv / np.sqrt(d)
        work[ops_nb1[j]] += bv * ops_w1[j] / d
        if ops_nb2[j] >= 0:
            work[ops_nb2[j]] += bv * ops_w2[j] / d
        work[v] = 0.0
    return y, work


@njit(cache=True)
def backward_substitute(x, y, ops_vertex, ops_pivot, ops_nb1, ops_w1, ops_nb2, ops_w2, n_ops):
    """Apply the inverse of the elimination factor in place on ``x``."""
    for j in range(n_ops - 1, -1, -1):
        v = ops_vertex[j]
        d = ops_pivot[j]
        s = y[v] / np.sqrt(d) + ops_w1[j] * x[ops_nb1[j]] / d
        if ops_nb2[j] >= 0:
            s += ops_w2[j] * x[ops_nb2[j]] / d
        x[v] = s
    return x
