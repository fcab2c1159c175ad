#!/usr/bin/env python3
"""Build graphs, look at their sparse formats, and sample neighborhoods."""

import numpy as np

import graphmp as G


def main():
    # a tiny directed graph: 0->2, 1->2, 2->0
    g = G.build_graph(3, [(0, 2), (1, 2), (2, 0)])
    print("nodes:", g.num_nodes, "edges:", g.num_edges)

    su, de, eid = g.coo()
    print("coo src:", su, "dst:", de, "eid:", eid)

    # CSR groups edges by source row, CSC by destination column.
    # Both keep the original edge ids so edge data stays aligned.
    csr = g.to_csr()
    print("csr indptr:", csr.indptr, "indices:", csr.indices,
          "edge_ids:", csr.edge_ids)
    csc = g.to_csc()
    print("csc indptr:", csc.indptr, "indices:", csc.indices,
          "edge_ids:", csc.edge_ids)

    # conversions are cached; asking twice builds nothing new
    print("builds so far:", g.adjacency_build_count)
    g.to_csr()
    print("builds after repeat call:", g.adjacency_build_count)

    # the reverse view flips edge direction and shares the cache:
    # reverse csr IS the original csc object
    rev = G.reverse(g)
    print("reverse shares adjacency:", rev.to_csr() is g.to_csc())
    print("in-degrees fwd:", g.in_degrees(np.arange(3)),
          "rev:", rev.in_degrees(np.arange(3)))

    # generators for larger inputs
    pl = G.power_law(2000, 10, seed=0)
    degs = pl.in_degrees(np.arange(pl.num_nodes))
    print("power_law: %d edges, mean in-degree %.1f, max %d"
          % (pl.num_edges, degs.mean(), degs.max()))

    ci = G.constant_indegree(2000, 10, seed=0)
    print("constant_indegree: every in-degree is 10:",
          bool((ci.in_degrees(np.arange(2000)) == 10).all()))

    # neighbor sampling: cap each seed's inbound edges at a fanout,
    # then extract the induced subgraph with relabeled nodes
    seeds = np.array([5, 17, 40], dtype=np.uint32)
    sub = G.neighbor_sample(pl, seeds, fanout=3, rng_seed=1)
    print("subgraph: %d nodes, %d edges, seeds map to rows 0..%d"
          % (sub.graph.num_nodes, sub.graph.num_edges, len(seeds) - 1))
    print("parent edge ids:", sub.parent_edge_ids[:6], "...")

    # slice node features down to the subgraph
    feats = np.arange(pl.num_nodes, dtype=float)[:, None]
    sub_feats = G.slice_rows(feats, sub.parent_node_ids)
    print("seed feature rows:", sub_feats[:3, 0])


if __name__ == "__main__":
    main()
