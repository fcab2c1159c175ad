"""Shared fixtures and independent oracles for the test suite.

The oracles here never call the package kernels: per-edge messages come from
an explicit loop formulation (vectorized only with plain numpy gather and
python-level reduction), so agreement is meaningful.
"""

import numpy as np
import pytest

import graphmp as G
from graphmp import kernels


def make_g3():
    """The 3-node worked example: edges 0->2, 1->2, 2->0."""
    return G.build_graph(3, [(0, 2), (1, 2), (2, 0)])


@pytest.fixture
def g3():
    return make_g3()


def random_graph(rng, max_nodes=64, max_edges=512, min_nodes=1):
    """Random multigraph with duplicate edges and self-loops allowed."""
    n = int(rng.integers(min_nodes, max_nodes + 1))
    m = int(rng.integers(0, max_edges + 1))
    src = rng.integers(0, n, size=m).astype(np.uint32)
    dst = rng.integers(0, n, size=m).astype(np.uint32)
    return G.from_arrays(src, dst, num_nodes=n)


def operands_for(rng, g, phi, d=2, positive=False):
    """Random operands sized for phi; positive=True keeps div safe."""
    def draw(rows):
        a = rng.standard_normal((rows, d))
        if positive:
            a = np.abs(a) + 0.5
        return a
    ops = {}
    for slot, target in (("X", "src"), ("Y", "dst"), ("W", "edge")):
        if target in phi.targets:
            rows = g.num_edges if target == "edge" else g.num_nodes
            ops[slot] = draw(rows)
    return ops


def edge_messages(g, phi, X=None, Y=None, W=None):
    """Per-edge message matrix, straight from the definitions."""
    su, de, _ = g.coo()
    su = su.astype(np.int64)
    de = de.astype(np.int64)
    by_target = {"src": None if X is None else np.asarray(X, float)[su],
                 "dst": None if Y is None else np.asarray(Y, float)[de],
                 "edge": None if W is None else np.asarray(W, float)}
    if phi.op == "copy_lhs":
        return by_target[phi.lhs_target].copy()
    if phi.op == "copy_rhs":
        return by_target[phi.rhs_target].copy()
    a = by_target[phi.lhs_target]
    b = by_target[phi.rhs_target]
    if phi.op == "dot":
        return (a * b).sum(axis=1, keepdims=True)
    if a.shape[1] == 1 and b.shape[1] > 1:
        a = np.broadcast_to(a, b.shape)
    elif b.shape[1] == 1 and a.shape[1] > 1:
        b = np.broadcast_to(b, a.shape)
    return {"add": a + b, "sub": a - b, "mul": a * b,
            "div": a / b}[phi.op]


def gspmm_oracle(g, phi, rho, X=None, Y=None, W=None):
    """Brute-force per-destination reduction over the message loop."""
    msgs = edge_messages(g, phi, X, Y, W)
    _, de, _ = g.coo()
    de = de.astype(np.int64)
    n, d = g.num_nodes, msgs.shape[1]
    out = np.zeros((n, d))
    arg = np.full((n, d), -1, dtype=np.int64)
    for v in range(n):
        eids = np.flatnonzero(de == v)
        if eids.size == 0:
            continue
        block = msgs[eids]
        if rho == "sum":
            out[v] = block.sum(axis=0)
        elif rho == "mean":
            out[v] = block.mean(axis=0)
        else:
            pick = block.argmax(axis=0) if rho == "max" else block.argmin(axis=0)
            # smallest edge id among ties, per column
            for k in range(d):
                best = block[pick[k], k]
                ties = eids[np.flatnonzero(block[:, k] == best)]
                arg[v, k] = ties.min()
                out[v, k] = best
    return out, arg


def gsddmm_oracle(g, phi, X=None, Y=None, W=None):
    return edge_messages(g, phi, X, Y, W)


def all_builtin_pairs():
    """Every built-in (phi, rho) for gspmm plus each phi alone for gsddmm."""
    phis = kernels.builtin_message_funcs()
    return [(p, r) for p in phis for r in ("sum", "max", "min", "mean")], phis


def rel_err(got, want):
    got = np.asarray(got, float)
    want = np.asarray(want, float)
    if got.size == 0:
        return 0.0
    scale = max(1.0, float(np.abs(want).max()))
    return float(np.abs(got - want).max()) / scale
