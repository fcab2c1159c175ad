#!/usr/bin/env python3
"""Reverse-mode differentiation through the graph kernels.

A Tape records operations on Var wrappers; backward() walks them in reverse.
The key property: the backward of each graph kernel is again expressed with
the same two kernels, so gradients inherit the fused memory behavior. Source
gradients run as an aggregation over the reverse graph.
"""

import numpy as np

import graphmp as G
from graphmp import autodiff, kernels


def main():
    g = G.build_graph(3, [(0, 2), (1, 2), (2, 0)])
    x = np.array([[1.0], [2.0], [3.0]])
    w = np.array([[10.0], [20.0], [30.0]])

    tape = G.Tape()
    xv = tape.leaf(x)
    wv = tape.leaf(w)
    z = autodiff.gspmm(g, kernels.mul("src", "edge"), "sum", X=xv, W=wv)
    loss = autodiff.matmul(autodiff.matmul(np.ones((1, 3)), z),
                           np.ones((1, 1)))
    with G.capture_dispatch() as log:
        grads = tape.backward(loss)
    print("dX:", grads[xv].ravel())  # [10, 20, 30]: each edge's weight
    print("dW:", grads[wv].ravel())  # [1, 2, 3]: each edge's source value

    rev = G.reverse(g)
    print("backward kernel launches:")
    for r in log:
        where = "reverse graph" if r.graph_id == rev.uid else "forward graph"
        print("  %s %s on the %s" % (r.kernel, r.phi, where))

    # max routes gradient only through the winning edge
    g2 = G.build_graph(3, [(0, 2), (1, 2)])
    x2 = np.array([[1.0], [5.0], [0.0]])
    z, arg = G.gspmm(g2, kernels.copy("src"), "max", X=x2)
    bundle = G.gspmm_backward(g2, kernels.copy("src"), "max", X=x2, aux=arg,
                              dZ=np.array([[0.0], [0.0], [9.0]]))
    print("max backward picks one source:", bundle.dx.ravel())

    # finite differences agree with the tape for any composition
    rng = np.random.default_rng(0)
    gg = G.power_law(30, 3, seed=1)
    xx = rng.standard_normal((30, 4))
    ww = rng.standard_normal((4, 2))
    labels = rng.integers(0, 2, size=30)

    def f(xa, wa):
        h = autodiff.gspmm(gg, kernels.copy("src"), "mean", X=xa)
        return autodiff.xent_loss(autodiff.matmul(h, wa), labels)

    print("grad check worst rel err: %.2e" % G.grad_check(f, [xx, ww]))


if __name__ == "__main__":
    main()
