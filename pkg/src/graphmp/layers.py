"""Reference GNN layers and a small full-graph trainer.

Three layer recipes, each a short composition of the fused kernels and the
dense tape ops, differentiable end to end:

  gcn_layer   relu( mean-neighbor-aggregate(X) @ W + b )
  sage_layer  act( X @ W_self + mean-neighbor-aggregate(X) @ W_neigh )
  gat_layer   per head: project, score each edge by summed source/destination
              projections, softmax per destination, weighted-sum aggregate;
              heads concatenated.

Aggregation is always in-neighbor mean (in-degree normalization); the dense
oracles in the tests use the same convention. The trainer is plain gradient
descent on the full graph with mean cross-entropy.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff
from . import kernels
from .graph import build_graph
from .messaging import edge_softmax

RELU_GAIN = float(np.sqrt(2.0))


def xavier_uniform(rng, fan_in, fan_out, gain=RELU_GAIN):
    """Uniform init on [-a, a], a = gain * sqrt(6 / (fan_in + fan_out))."""
    a = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def _act(h, name):
    if name == "relu":
        return autodiff.relu(h)
    if name in (None, "linear"):
        return h
    raise ValueError("unknown activation %r" % (name,))


def _check_rows(g, X):
    n = getattr(X, "value", X).shape[0]
    if n != g.num_nodes:
        raise ValueError("feature matrix has %d rows for a %d-node graph"
                         % (n, g.num_nodes))


def _mean_agg(g, X, **kw):
    return autodiff.gspmm(g, kernels.copy("src"), "mean", X=X, **kw)


@dataclass
class GCNParams:
    W: np.ndarray
    b: np.ndarray  # (1, d_out)


def gcn_layer(g, X, params, act="relu", **kw):
    """relu( mean-aggregate(X) @ W + b ). Zero in-degree rows see only b."""
    _check_rows(g, X)
    agg = _mean_agg(g, X, **kw)
    h = autodiff.add(autodiff.matmul(agg, params.W), params.b)
    return _act(h, act)


@dataclass
class SAGEParams:
    W_self: np.ndarray
    W_neigh: np.ndarray


def sage_layer(g, X, params, act="relu", **kw):
    """act( X @ W_self + mean-aggregate(X) @ W_neigh ). No bias."""
    _check_rows(g, X)
    own = autodiff.matmul(X, params.W_self)
    neigh = autodiff.matmul(_mean_agg(g, X, **kw), params.W_neigh)
    return _act(autodiff.add(own, neigh), act)


@dataclass
class GATHead:
    W: np.ndarray      # (d_in, d_head)
    a_l: np.ndarray    # (d_head, 1)
    a_r: np.ndarray    # (d_head, 1)


@dataclass
class GATParams:
    heads: list


def gat_layer(g, X, params, num_heads=None, **kw):
    """Attention aggregation per head, heads concatenated column-wise.

    Per head: proj = X @ W; each edge u->v scores a_l'(proj_u) + a_r'(proj_v);
    scores softmax per destination; output is the attention-weighted sum of
    source projections. An isolated destination gets a zero row.
    """
    _check_rows(g, X)
    heads = params.heads if num_heads is None else params.heads[:num_heads]
    if not heads:
        raise ValueError("head count must be >= 1")
    outs = []
    for hp in heads:
        proj = autodiff.matmul(X, hp.W)
        el = autodiff.matmul(proj, hp.a_l)
        er = autodiff.matmul(proj, hp.a_r)
        score = autodiff.gsddmm(g, kernels.add("src", "dst"), X=el, Y=er, **kw)
        alpha = edge_softmax(g, score)
        outs.append(autodiff.gspmm(g, kernels.mul("src", "edge"), "sum",
                                   X=proj, W=alpha, **kw))
    return outs[0] if len(outs) == 1 else autodiff.hconcat(outs)


def init_gcn(rng, d_in, d_out):
    return GCNParams(W=xavier_uniform(rng, d_in, d_out),
                     b=np.zeros((1, d_out)))


def init_sage(rng, d_in, d_out):
    return SAGEParams(W_self=xavier_uniform(rng, d_in, d_out),
                      W_neigh=xavier_uniform(rng, d_in, d_out))


def init_gat(rng, d_in, d_head, num_heads):
    heads = [GATHead(W=xavier_uniform(rng, d_in, d_head),
                     a_l=xavier_uniform(rng, d_head, 1),
                     a_r=xavier_uniform(rng, d_head, 1))
             for _ in range(num_heads)]
    return GATParams(heads=heads)


class GCNModel:
    """A stack of GCN layers; relu between layers, linear on the last."""

    def __init__(self, dims, seed=0):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        rng = np.random.default_rng(seed)
        self.layers = [init_gcn(rng, a, b) for a, b in zip(dims, dims[1:])]

    def parameters(self):
        out = []
        for lp in self.layers:
            out.extend([lp.W, lp.b])
        return out

    def forward(self, g, x, pvars, **kw):
        h = x
        last = len(self.layers) - 1
        for i in range(len(self.layers)):
            p = GCNParams(W=pvars[2 * i], b=pvars[2 * i + 1])
            h = gcn_layer(g, h, p, act="relu" if i < last else "linear", **kw)
        return h


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 100
    seed: int = 0
    strategy: str = None  # force one kernel strategy, e.g. 'serial_reference'

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def train(g, features, labels, model, cfg):
    """Full-graph gradient descent; returns the per-epoch loss list.

    Parameters update in place (the tape leaves alias the model arrays), so a
    model keeps its trained state after the call.
    """
    labels = np.asarray(labels, dtype=np.int64)
    x = np.asarray(features, dtype=np.float64)
    params = model.parameters()
    n_classes = params[-1].shape[1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("label out of range [0, %d)" % n_classes)

    losses = []
    for _ in range(cfg.epochs):
        tape = autodiff.Tape()
        pvars = [tape.leaf(p) for p in params]
        if cfg.strategy is not None:
            with kernels.force_strategy(cfg.strategy):
                logits = model.forward(g, x, pvars)
        else:
            logits = model.forward(g, x, pvars)
        loss = autodiff.xent_loss(logits, labels)
        losses.append(loss.value.item())
        grads = tape.backward(loss)
        for p, pv in zip(params, pvars):
            p -= cfg.lr * grads[pv]
    return losses


def karate_club():
    """The bundled 34-node club graph: (graph, one-hot degree features, labels).

    Both directions of each of the 78 friendships are present (156 directed
    edges). Features one-hot encode each node's in-degree; labels are the two
    factions after the split.
    """
    here = Path(__file__).parent / "data"
    src, dsts, nodes = [], [], 0
    with open(here / "karate.edges") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("nodes="):
                nodes = int(line.split("=", 1)[1])
                continue
            u, v = line.split()
            src.append(int(u))
            dsts.append(int(v))
    g = build_graph(nodes, (np.asarray(src, dtype=np.uint32),
                            np.asarray(dsts, dtype=np.uint32)))
    deg = g.in_degrees()
    x = np.zeros((nodes, int(deg.max()) + 1))
    x[np.arange(nodes), deg] = 1.0
    labels = np.zeros(nodes, dtype=np.int64)
    with open(here / "karate_labels.csv", newline="") as f:
        for row in csv.DictReader(f):
            labels[int(row["node"])] = int(row["faction"])
    return g, x, labels
