"""Immutable directed multigraph with lazily built, shared adjacency indexes.

A graph is a pair of uint32 id arrays (src, dst) over dense edge ids
0..num_edges-1 (the edge id is the position in the defining arrays).
Self loops and duplicate edges are allowed.

The compressed indexes come in a pair: grouping by source (out-adjacency,
``to_csr``) and grouping by destination (in-adjacency, ``to_csc``). The pair
is shared with the reverse view, so ``reverse(g).to_csc()`` is the very same
object as ``g.to_csr()`` and flipping direction never rebuilds or copies
anything. A build counter exposes that property to tests.
"""

import itertools
import threading
from dataclasses import dataclass

import numpy as np

_uid_counter = itertools.count(1)


@dataclass(frozen=True)
class Adjacency:
    """One grouped index: segment pointers, neighbor ids, edge ids.

    indptr has num_groups+1 entries (int64). Within a segment, neighbor ids
    ascend; ties between parallel edges break by ascending edge id.
    """
    indptr: np.ndarray
    indices: np.ndarray   # uint32 node ids
    edge_ids: np.ndarray  # uint32


def _build_adjacency(group_keys, other_keys, num_nodes):
    # primary sort on the grouping node, then neighbor, then edge id
    eids = np.arange(group_keys.size, dtype=np.uint32)
    order = np.lexsort((eids, other_keys, group_keys))
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(group_keys, minlength=num_nodes), out=indptr[1:])
    adj = Adjacency(indptr, other_keys[order], eids[order])
    for a in (adj.indptr, adj.indices, adj.edge_ids):
        a.flags.writeable = False
    return adj


class _CachePair:
    """Adjacency caches shared between a graph and its reverse view.

    Slots are keyed on the base (non-reversed) orientation.
    """

    __slots__ = ("by_src", "by_dst", "build_count", "lock")

    def __init__(self):
        self.by_src = None
        self.by_dst = None
        self.build_count = 0
        self.lock = threading.Lock()


class Graph:
    """Directed multigraph over dense uint32 ids. Structure only, no features."""

    def __init__(self, src, dst, num_nodes, _caches=None, _flipped=False):
        src = np.ascontiguousarray(src, dtype=np.uint32)
        dst = np.ascontiguousarray(dst, dtype=np.uint32)
        if src.ndim != 1 or dst.ndim != 1 or src.shape != dst.shape:
            raise ValueError("src and dst must be 1-D arrays of equal length")
        num_nodes = int(num_nodes)
        if num_nodes < 0 or num_nodes > np.iinfo(np.uint32).max:
            raise ValueError("num_nodes out of range for uint32 ids")
        if src.size and (int(src.max()) >= num_nodes or int(dst.max()) >= num_nodes):
            bad = int(np.nonzero((src >= num_nodes) | (dst >= num_nodes))[0][0])
            raise ValueError(
                "edge %d has endpoint (%d, %d) outside [0, %d)"
                % (bad, int(src[bad]), int(dst[bad]), num_nodes))
        src.flags.writeable = False
        dst.flags.writeable = False
        self._src = src
        self._dst = dst
        self._num_nodes = num_nodes
        self._caches = _caches if _caches is not None else _CachePair()
        self._flipped = _flipped
        self._reverse_view = None
        self.uid = next(_uid_counter)

    # -- basic queries ---------------------------------------------------

    @property
    def num_nodes(self):
        return self._num_nodes

    @property
    def num_edges(self):
        return self._src.size

    def coo(self):
        """(src, dst, edge_ids) in edge-id order."""
        return self._src, self._dst, np.arange(self.num_edges, dtype=np.uint32)

    @property
    def src(self):
        return self._src

    @property
    def dst(self):
        return self._dst

    def __repr__(self):
        return "Graph(num_nodes=%d, num_edges=%d, uid=%d)" % (
            self.num_nodes, self.num_edges, self.uid)

    # -- grouped indexes -------------------------------------------------

    def _slot(self, name):
        caches = self._caches
        adj = getattr(caches, name)
        if adj is None:
            with caches.lock:
                adj = getattr(caches, name)
                if adj is None:  # double checked so racing builders agree
                    base_src, base_dst = (
                        (self._dst, self._src) if self._flipped else (self._src, self._dst))
                    if name == "by_src":
                        adj = _build_adjacency(base_src, base_dst, self._num_nodes)
                    else:
                        adj = _build_adjacency(base_dst, base_src, self._num_nodes)
                    setattr(caches, name, adj)
                    caches.build_count += 1
        return adj

    def to_csr(self):
        """Out-adjacency: edges grouped by source node."""
        return self._slot("by_dst" if self._flipped else "by_src")

    def to_csc(self):
        """In-adjacency: edges grouped by destination node."""
        return self._slot("by_src" if self._flipped else "by_dst")

    @property
    def adjacency_build_count(self):
        return self._caches.build_count

    # -- degrees ---------------------------------------------------------

    def _degrees(self, keys, cached):
        if cached is not None:
            return np.diff(cached.indptr)
        return np.bincount(keys, minlength=self._num_nodes).astype(np.int64)

    def in_degrees(self, nodes=None):
        """In-degree of every node, or of a batch of node ids."""
        cached = self._caches.by_src if self._flipped else self._caches.by_dst
        degs = self._degrees(self._dst, cached)
        if nodes is None:
            return degs
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= self._num_nodes):
            raise IndexError("node id out of range")
        return degs[nodes]

    def out_degrees(self, nodes=None):
        cached = self._caches.by_dst if self._flipped else self._caches.by_src
        degs = self._degrees(self._src, cached)
        if nodes is None:
            return degs
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= self._num_nodes):
            raise IndexError("node id out of range")
        return degs[nodes]


def build_graph(num_nodes, edges):
    """Construct a Graph from an edge sequence; ids assigned in input order.

    edges may be a sequence of (u, v) pairs or a pair of id arrays.
    """
    if isinstance(edges, tuple) and len(edges) == 2 and isinstance(edges[0], np.ndarray):
        src, dst = edges
    else:
        arr = np.asarray(edges, dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        src, dst = arr[:, 0], arr[:, 1]
    src = np.asarray(src)
    dst = np.asarray(dst)
    if src.size and (src.min() < 0 or dst.min() < 0):
        bad = int(np.nonzero((src < 0) | (dst < 0))[0][0])
        raise ValueError("edge %d has a negative endpoint" % bad)
    return Graph(src.astype(np.uint32), dst.astype(np.uint32), num_nodes)


def from_arrays(src, dst, num_nodes=None):
    """Graph from endpoint arrays; num_nodes defaults to max id + 1."""
    src = np.asarray(src, dtype=np.uint32)
    dst = np.asarray(dst, dtype=np.uint32)
    if num_nodes is None:
        num_nodes = int(max(src.max(initial=0), dst.max(initial=0))) + 1 if src.size else 0
    return Graph(src, dst, num_nodes)


def reverse(g):
    """Edge-for-edge reversed view of g: same edge ids, directions flipped.

    The view shares g's adjacency cache pair, so no index is ever rebuilt:
    reverse(g).to_csc() is g.to_csr(). reverse(reverse(g)) is g itself.
    """
    if g._reverse_view is not None:
        return g._reverse_view
    rev = Graph(g._dst, g._src, g._num_nodes, _caches=g._caches,
                _flipped=not g._flipped)
    rev._reverse_view = g
    g._reverse_view = rev
    return rev


@dataclass(frozen=True)
class Subgraph:
    """A compactly relabeled induced piece of a parent graph.

    Row i of any parent node feature matrix sliced by parent_node_ids is the
    feature of subgraph node i; parent_edge_ids plays the same role for edge
    features and records which parent edge each subgraph edge came from.
    """
    graph: "Graph"
    parent_node_ids: np.ndarray
    parent_edge_ids: np.ndarray


def neighbor_sample(g, seeds, fanout, rng_seed):
    """Sample up to `fanout` inbound edges per seed, without replacement.

    Seeds come first in the relabeling (first occurrence order), then newly
    reached predecessors in ascending parent id. Each seed's fanout picks are
    a partial Fisher-Yates pass over a copy of its in-edge segment, so a run
    is fully determined by rng_seed.
    """
    fanout = int(fanout)
    if fanout < 1:
        raise ValueError("fanout must be at least 1")
    seeds = np.asarray(seeds, dtype=np.int64)
    if seeds.size and (seeds.min() < 0 or seeds.max() >= g.num_nodes):
        raise IndexError("seed node id out of range")
    adj = g.to_csc()
    rng = np.random.default_rng(rng_seed)

    keep_seeds = []
    seen = set()
    for s in seeds.tolist():
        if s not in seen:
            seen.add(s)
            keep_seeds.append(s)

    picked = []  # (parent_edge_pos_in_csc) per seed, ascending within a seed
    for s in keep_seeds:
        lo, hi = int(adj.indptr[s]), int(adj.indptr[s + 1])
        deg = hi - lo
        if deg == 0:
            continue
        k = min(fanout, deg)
        pool = np.arange(lo, hi)
        for i in range(k):  # partial Fisher-Yates: only the first k slots
            j = int(rng.integers(i, deg))
            pool[i], pool[j] = pool[j], pool[i]
        picked.append(np.sort(pool[:k]))

    if picked:
        positions = np.concatenate(picked)
        parent_eids = adj.edge_ids[positions].astype(np.uint32)
        parent_src = g.src[parent_eids]
        parent_dst = g.dst[parent_eids]
    else:
        parent_eids = np.zeros(0, dtype=np.uint32)
        parent_src = parent_dst = np.zeros(0, dtype=np.uint32)

    new_nodes = np.setdiff1d(parent_src.astype(np.int64), np.asarray(keep_seeds))
    node_ids = np.concatenate([np.asarray(keep_seeds, dtype=np.int64),
                               np.sort(new_nodes)]).astype(np.uint32)
    relabel = {int(p): i for i, p in enumerate(node_ids)}
    sub_src = np.fromiter((relabel[int(u)] for u in parent_src),
                          dtype=np.uint32, count=parent_src.size)
    sub_dst = np.fromiter((relabel[int(v)] for v in parent_dst),
                          dtype=np.uint32, count=parent_dst.size)
    sub = Graph(sub_src, sub_dst, len(node_ids))
    return Subgraph(sub, node_ids, parent_eids)
