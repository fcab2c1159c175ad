"""Synthetic graph generators for tests and benchmarks.

Four kinds, all deterministic for a fixed seed:

  chain              edges (i -> i+1); the sparsest connected shape.
  constant_indegree  every node receives exactly k edges from k distinct
                     uniform predecessors (a k-regular in-degree surrogate).
  power_law          preferential attachment: node i sends up to `deg` edges
                     to earlier nodes drawn proportionally to in-degree + 1,
                     producing a heavy-tailed in-degree distribution.
  erdos_renyi        each ordered pair (u, v), u != v, kept with probability p.

power_law's edge count is n*deg minus the deg*(deg+1)/2 edges the first few
nodes cannot form; callers treat that as rounding.
"""

from dataclasses import dataclass

import numpy as np

from .graph import from_arrays


@dataclass(frozen=True)
class GenSpec:
    kind: str
    num_nodes: int
    param: float = 0.0  # avg degree / k / edge probability, per kind
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("chain", "constant_indegree", "power_law",
                             "erdos_renyi"):
            raise ValueError("unknown graph kind %r" % (self.kind,))
        if self.num_nodes < 1:
            raise ValueError("num_nodes must be positive")
        if self.kind != "chain" and self.param <= 0:
            raise ValueError("parameter must be positive for %s" % self.kind)
        if self.kind == "constant_indegree" and int(self.param) >= self.num_nodes:
            raise ValueError("constant in-degree k must be < num_nodes")
        if self.kind == "erdos_renyi" and self.param > 1:
            raise ValueError("edge probability must be <= 1")


def chain(num_nodes):
    """Directed path 0 -> 1 -> ... -> n-1."""
    n = int(num_nodes)
    idx = np.arange(max(n - 1, 0), dtype=np.uint32)
    return from_arrays(idx, idx + 1, num_nodes=n)


def constant_indegree(num_nodes, k, seed=0):
    """Every node gets k distinct uniform predecessors (never itself)."""
    n, k = int(num_nodes), int(k)
    if not 0 < k < n:
        raise ValueError("need 0 < k < num_nodes")
    rng = np.random.default_rng(seed)
    src = np.empty(n * k, dtype=np.uint32)
    for v in range(n):
        pick = rng.choice(n - 1, size=k, replace=False)
        pick[pick >= v] += 1  # skip self
        src[v * k:(v + 1) * k] = pick
    dst = np.repeat(np.arange(n, dtype=np.uint32), k)
    return from_arrays(src, dst, num_nodes=n)


def power_law(num_nodes, avg_degree, seed=0):
    """Preferential attachment; heavy-tailed in-degrees.

    Node i targets min(i, avg_degree) distinct earlier nodes, each drawn from
    a pool where node u appears in_degree(u) + 1 times.
    """
    n, deg = int(num_nodes), int(avg_degree)
    if deg < 1:
        raise ValueError("avg_degree must be >= 1")
    rng = np.random.default_rng(seed)
    pool = [0]
    src, dst = [], []
    for i in range(1, n):
        m = min(i, deg)
        if i <= deg:
            targets = list(range(i))
        else:
            seen = {}
            while len(seen) < m:
                for j in rng.integers(0, len(pool), size=2 * m):
                    seen.setdefault(pool[j], None)
                    if len(seen) == m:
                        break
            targets = list(seen)
        src.extend([i] * len(targets))
        dst.extend(targets)
        pool.extend(targets)  # each target's in-degree grew by one
        pool.append(i)        # base weight for the new node
    return from_arrays(np.asarray(src, dtype=np.uint32),
                       np.asarray(dst, dtype=np.uint32), num_nodes=n)


def erdos_renyi(num_nodes, p, seed=0):
    """Each ordered pair (u, v), u != v, is an edge with probability p."""
    n, p = int(num_nodes), float(p)
    if not 0 < p <= 1:
        raise ValueError("need 0 < p <= 1")
    rng = np.random.default_rng(seed)
    srcs, dsts = [], []
    block = max(1, min(n, 2 ** 22 // max(n, 1)))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        mask = rng.random((hi - lo, n)) < p
        mask[np.arange(hi - lo), np.arange(lo, hi)] = False
        u, v = np.nonzero(mask)
        srcs.append((u + lo).astype(np.uint32))
        dsts.append(v.astype(np.uint32))
    return from_arrays(np.concatenate(srcs), np.concatenate(dsts), num_nodes=n)


def generate(spec):
    """Build the graph a GenSpec describes."""
    if spec.kind == "chain":
        return chain(spec.num_nodes)
    if spec.kind == "constant_indegree":
        return constant_indegree(spec.num_nodes, int(spec.param), spec.seed)
    if spec.kind == "power_law":
        return power_law(spec.num_nodes, int(spec.param), spec.seed)
    return erdos_renyi(spec.num_nodes, spec.param, spec.seed)


def parse_graph_spec(text, seed=0):
    """Parse CLI graph syntax 'kind:n=10000,deg=20' into a GenSpec.

    Recognized parameter names: n/nodes, deg/k/p/param, seed.
    """
    kind, _, rest = text.partition(":")
    kw = {"seed": seed}
    n, param = None, None
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        key = key.strip()
        if key in ("n", "nodes"):
            n = int(val)
        elif key in ("deg", "k", "p", "param"):
            param = float(val)
        elif key == "seed":
            kw["seed"] = int(val)
        else:
            raise ValueError("unknown graph parameter %r" % key)
    if n is None:
        raise ValueError("graph spec needs n=<num_nodes>")
    return GenSpec(kind=kind.strip(), num_nodes=n,
                   param=0.0 if param is None else param, **kw)
