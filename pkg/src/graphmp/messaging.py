"""Graph-centric message passing over named features.

``update_all`` runs one fused gspmm over features named in ndata/edata and
stores the reduced result back into ndata; ``apply_edges`` does the same with
one gsddmm into edata. Operands are (target, feature-name) fields built with
``src``/``dst``/``edge`` and combined by ``msg``. Both calls tape when any
referenced feature is a tape variable.

``edge_softmax`` normalizes per-edge scores over each destination's inbound
edges, composed entirely from the two kernels (max-shift, subtract,
exponentiate, sum, divide) so its gradient flows through kernel backwards.

``update_all_udf`` is the catch-all for reducers with no built-in: it
materializes the per-edge message matrix (documented |E| x d cost, warning
above a size guard), groups nodes by in-degree, and hands each bucket to the
reducer as one rectangular block.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import accounting
from . import autodiff
from . import kernels
from .features import matrix_data

UDF_SIZE_GUARD = 1_000_000  # message entries before the materialization warning


@dataclass(frozen=True)
class Field:
    target: str  # 'src' | 'dst' | 'edge'
    name: str


def src(name):
    """Operand: the named node feature, read at each edge's source."""
    return Field("src", name)


def dst(name):
    """Operand: the named node feature, read at each edge's destination."""
    return Field("dst", name)


def edge(name):
    """Operand: the named edge feature."""
    return Field("edge", name)


@dataclass(frozen=True)
class NamedMessage:
    op: str
    lhs: Field = None
    rhs: Field = None


def msg(op, lhs=None, rhs=None):
    """A message recipe over named features, e.g. msg('mul', src('h'), edge('a')).

    'copy' is an alias for copy_lhs; a single positional field given to
    copy_rhs is understood as its rhs.
    """
    if op == "copy":
        op = "copy_lhs"
    if op == "copy_rhs" and rhs is None and lhs is not None:
        lhs, rhs = None, lhs
    return NamedMessage(op, lhs, rhs)


def _resolve(g, ndata, edata, recipe):
    phi = kernels.MessageFunc(recipe.op,
                              recipe.lhs.target if recipe.lhs else None,
                              recipe.rhs.target if recipe.rhs else None)
    operands = {"X": None, "Y": None, "W": None}
    slot = {"src": "X", "dst": "Y", "edge": "W"}
    for f in (recipe.lhs, recipe.rhs):
        if f is None:
            continue
        store = edata if f.target == "edge" else ndata
        operands[slot[f.target]] = store[f.name]
    return phi, operands


def update_all(g, recipe, rho, ndata, edata=None, *, out, **kernel_kw):
    """One fused gspmm over named features; result stored as ndata[out]."""
    phi, ops = _resolve(g, ndata, edata, recipe)
    z = autodiff.gspmm(g, phi, rho, **ops, **kernel_kw)
    ndata[out] = z
    return z


def apply_edges(g, recipe, ndata=None, edata=None, *, out, **kernel_kw):
    """One fused gsddmm over named features; result stored as edata[out]."""
    if edata is None:
        raise ValueError("apply_edges stores per-edge output; pass the edata dict")
    phi, ops = _resolve(g, ndata, edata, recipe)
    m = autodiff.gsddmm(g, phi, **ops, **kernel_kw)
    edata[out] = m
    return m


def edge_softmax(g, scores, edata=None, out=None):
    """Softmax of per-edge scores over each destination's inbound edges.

    scores is a per-edge matrix (or Var), or a name into edata. Every column
    normalizes independently; the max over each destination is subtracted
    before exponentiation, one code path regardless of magnitude. When out is
    given the result also lands in edata[out].
    """
    if isinstance(scores, str):
        if edata is None:
            raise ValueError("named scores need the edata dict")
        scores = edata[scores]
    peak = autodiff.gspmm(g, kernels.copy_rhs("edge"), "max", W=scores)
    shifted = autodiff.gsddmm(g, kernels.sub("edge", "dst"), W=scores, Y=peak)
    weights = autodiff.exp(shifted)
    total = autodiff.gspmm(g, kernels.copy_rhs("edge"), "sum", W=weights)
    alpha = autodiff.gsddmm(g, kernels.div("edge", "dst"), W=weights, Y=total)
    if out is not None:
        if edata is None:
            raise ValueError("storing under a name needs the edata dict")
        edata[out] = alpha
    return alpha


@dataclass
class UDFContext:
    """Per-edge operand rows for a message UDF, aligned by edge id."""
    src_rows: np.ndarray = None
    dst_rows: np.ndarray = None
    edge_rows: np.ndarray = None


def update_all_udf(g, message_udf, reduce_udf, src_feat=None, dst_feat=None,
                   edge_feat=None):
    """Message passing with user functions instead of built-in (phi, rho).

    message_udf(UDFContext) returns the (num_edges, d) message matrix, which
    is materialized in full (this path is deliberately not fused). Nodes are
    then grouped by in-degree, ascending, and reduce_udf is called once per
    bucket with a (nodes_in_bucket, degree, d) block (nodes ascending by id),
    returning (nodes_in_bucket, d). Zero-degree nodes get zero rows without
    invoking the reducer.
    """
    su, de, _ = g.coo()
    ctx = UDFContext()
    if src_feat is not None:
        ctx.src_rows = matrix_data(src_feat)[su]
    if dst_feat is not None:
        ctx.dst_rows = matrix_data(dst_feat)[de]
    if edge_feat is not None:
        ctx.edge_rows = np.asarray(matrix_data(edge_feat), dtype=np.float64)
    msgs = np.asarray(message_udf(ctx), dtype=np.float64)
    if msgs.ndim == 1:
        msgs = msgs[:, None]
    if msgs.shape[0] != g.num_edges:
        raise ValueError("message UDF returned %d rows for %d edges"
                         % (msgs.shape[0], g.num_edges))
    if msgs.size > UDF_SIZE_GUARD:
        warnings.warn("materializing %d message entries; the UDF path is not fused"
                      % msgs.size, RuntimeWarning)
    accounting.register_bytes(msgs.nbytes)

    d = msgs.shape[1]
    adj = g.to_csc()
    counts = np.diff(adj.indptr)
    out = accounting.register(np.zeros((g.num_nodes, d)))
    for k in np.unique(counts):
        if k == 0:
            continue
        nodes = np.flatnonzero(counts == k)  # ascending ids
        positions = adj.indptr[nodes][:, None] + np.arange(k)[None, :]
        block = msgs[adj.edge_ids[positions].astype(np.int64)]
        accounting.register_bytes(block.nbytes)
        reduced = np.asarray(reduce_udf(block), dtype=np.float64)
        if reduced.shape != (len(nodes), d):
            raise ValueError("reduce UDF returned shape %s for a (%d, %d) bucket"
                             % (reduced.shape, len(nodes), d))
        out[nodes] = reduced
        accounting.release_bytes(block.nbytes)
    accounting.release_bytes(msgs.nbytes)
    return out
