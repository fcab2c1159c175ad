#!/usr/bin/env python3
"""The two fused kernels, their strategies, and what fusion buys in memory.

gspmm reduces per-edge messages into each destination node; gsddmm writes one
message per edge. Messages combine up to two operands (source feature X,
destination feature Y, edge feature W) without ever materializing the
full per-edge matrix inside gspmm.
"""

import numpy as np

import graphmp as G
from graphmp import kernels


def main():
    g = G.build_graph(3, [(0, 2), (1, 2), (2, 0)])
    x = np.array([[1.0], [2.0], [3.0]])
    w = np.array([[10.0], [20.0], [30.0]])

    # weighted sum into each destination
    z, _ = G.gspmm(g, kernels.mul("src", "edge"), "sum", X=x, W=w)
    print("weighted sum:", z.ravel())  # [90, 0, 50]

    # max keeps the winning edge id (smallest id wins ties, -1 if no edges)
    z, arg = G.gspmm(g, kernels.copy("src"), "max", X=x)
    print("max:", z.ravel(), "arg edges:", arg.arg_edge.ravel())

    # mean reports the in-degree counts it divided by
    z, counts = G.gspmm(g, kernels.copy("src"), "mean", X=x)
    print("mean:", z.ravel(), "counts:", counts)

    # per-edge dot scores, the attention primitive
    p = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    s = G.gsddmm(g, kernels.dot("src", "dst"), X=p, Y=p)
    print("dot scores per edge:", s.ravel())

    # every strategy computes the same thing; serial_reference is the
    # straight-line implementation the others are checked against
    rng = np.random.default_rng(0)
    big = G.power_law(5000, 20, seed=0)
    xb = rng.standard_normal((5000, 16))
    ref, _ = G.gspmm(big, kernels.copy("src"), "sum", X=xb,
                     strategy="serial_reference")
    for strat in ("node_parallel", "edge_parallel", "edge_parallel_atomic",
                  "feature_parallel"):
        zb, _ = G.gspmm(big, kernels.copy("src"), "sum", X=xb,
                        strategy=strat, num_workers=4)
        print("%-22s max abs diff vs serial: %.2e"
              % (strat, np.abs(zb - ref).max()))

    # the dispatch log records every kernel launch
    with G.capture_dispatch() as log:
        G.gspmm(g, kernels.mul("src", "edge"), "sum", X=x, W=w)
        G.gsddmm(g, kernels.dot("src", "dst"), X=p, Y=p)
    for r in log:
        print("dispatched:", r.kernel, r.phi, r.rho, r.strategy)

    # fusion in numbers: peak auxiliary bytes of a fused reduction stay far
    # below the |E| x d message matrix a gather-then-reduce pipeline holds
    d = 16
    wb = rng.standard_normal((big.num_edges, 1))
    with G.track_allocations() as meter:
        G.gspmm(big, kernels.mul("src", "edge"), "sum", X=xb, W=wb)
    materialized = big.num_edges * d * 8
    print("fused peak bytes: %d (message matrix would be %d, %.1fx more)"
          % (meter.peak_bytes, materialized,
             materialized / meter.peak_bytes))


if __name__ == "__main__":
    main()
