"""Fused sparse message-passing kernels.

Two primitives cover the computation patterns of message passing:

* ``gspmm``: for every node v, combine a value from each inbound edge
  (u, e, v) with a binary or copy op and reduce the results into one output
  row per node. Plain sparse-dense matmul is the special case
  phi=copy_lhs(src), rho=sum.
* ``gsddmm``: for every edge (u, e, v), combine values from its endpoints
  and/or the edge itself into one output row per edge. Dot-product scoring
  of endpoint vectors is the special case phi=dot(src, dst).

Both kernels are fused: no strategy ever materializes an |E| x d message
matrix for gspmm. Work proceeds in edge chunks of ~BLOCK_EDGES rows, so peak
auxiliary memory is O(|V| * d + workers * d + BLOCK_EDGES * d). Allocations
are reported to `accounting` so the bound is measurable.

Operands: X has one row per source node, Y one row per destination node,
W one row per edge. A binary op combines two of the three targets; operand
feature dims must match, or one side may be a single column broadcast
across the other (except dot, which requires equal dims and yields one
column). Division by an exact zero raises naming the edge id.

Reducers: sum, max, min, mean. mean divides by in-degree (0/0 -> 0).
max/min also return, per output cell, the id of the edge that supplied the
extremum (ties -> smallest edge id; -1 marks rows with no inbound edges).
"""

import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import accounting
from .graph import reverse

BLOCK_EDGES = 2048

_INT_MAX = np.iinfo(np.int64).max

OPS = ("copy_lhs", "copy_rhs", "add", "sub", "mul", "div", "dot")
TARGETS = ("src", "dst", "edge")
REDUCERS = ("sum", "max", "min", "mean")

GSPMM_STRATEGIES = ("node_parallel", "edge_parallel", "edge_parallel_atomic",
                    "feature_parallel", "serial_reference")
GSDDMM_STRATEGIES = ("node_parallel", "edge_parallel", "feature_parallel",
                     "serial_reference")

# formats each strategy can honor; first entry is the default
_GSPMM_FORMATS = {
    "node_parallel": ("csc",),
    "edge_parallel": ("csc",),
    "edge_parallel_atomic": ("coo", "csr", "csc"),
    "feature_parallel": ("csc",),
    "serial_reference": ("coo",),
}
_GSDDMM_FORMATS = {
    "node_parallel": ("csr", "csc"),
    "edge_parallel": ("coo", "csr", "csc"),
    "feature_parallel": ("coo", "csr", "csc"),
    "serial_reference": ("coo",),
}


# ---------------------------------------------------------------------------
# message function descriptors


@dataclass(frozen=True)
class MessageFunc:
    """A per-edge combination: op plus the operand target(s) it reads.

    copy_lhs/copy_rhs read a single target (lhs_target or rhs_target).
    The binary ops read both. Targets: 'src' (X row of the edge's source),
    'dst' (Y row of its destination), 'edge' (W row of the edge itself).
    """
    op: str
    lhs_target: str = None
    rhs_target: str = None

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError("unknown op %r" % (self.op,))
        if self.op == "copy_lhs":
            if self.lhs_target not in TARGETS or self.rhs_target is not None:
                raise ValueError("copy_lhs takes exactly one lhs target")
        elif self.op == "copy_rhs":
            if self.rhs_target not in TARGETS or self.lhs_target is not None:
                raise ValueError("copy_rhs takes exactly one rhs target")
        else:
            if self.lhs_target not in TARGETS or self.rhs_target not in TARGETS:
                raise ValueError("%s takes lhs and rhs targets" % self.op)
            if self.lhs_target == self.rhs_target:
                raise ValueError("binary op targets must differ")

    @property
    def targets(self):
        return tuple(t for t in (self.lhs_target, self.rhs_target) if t is not None)

    def describe(self):
        return "%s(%s)" % (self.op, ",".join(self.targets))


def copy(target):
    """phi copying the lhs operand unchanged (copy_lhs)."""
    return MessageFunc("copy_lhs", lhs_target=target)


def copy_rhs(target):
    return MessageFunc("copy_rhs", rhs_target=target)


def add(lhs, rhs):
    return MessageFunc("add", lhs, rhs)


def sub(lhs, rhs):
    return MessageFunc("sub", lhs, rhs)


def mul(lhs, rhs):
    return MessageFunc("mul", lhs, rhs)


def div(lhs, rhs):
    return MessageFunc("div", lhs, rhs)


def dot(lhs, rhs):
    return MessageFunc("dot", lhs, rhs)


def builtin_message_funcs():
    """The canonical phi list: three copies, ordered binary pairs, dot pairs."""
    funcs = [copy("src"), copy("dst"), copy("edge")]
    pairs = [("src", "dst"), ("dst", "src"), ("src", "edge"),
             ("edge", "src"), ("dst", "edge"), ("edge", "dst")]
    for op in ("add", "sub", "mul", "div"):
        funcs += [MessageFunc(op, a, b) for a, b in pairs]
    funcs += [dot("src", "dst"), dot("src", "edge"), dot("dst", "edge")]
    return funcs


@dataclass
class ArgExtrema:
    """Which edge supplied each max/min cell: int64, -1 for empty rows."""
    arg_edge: np.ndarray

    @property
    def empty_rows(self):
        return self.arg_edge[:, 0] < 0


# ---------------------------------------------------------------------------
# configuration


_config = threading.local()


def _forced_strategy():
    return getattr(_config, "strategy", None)


def _default_workers():
    return getattr(_config, "workers", 1)


@contextmanager
def force_strategy(name):
    """Route every kernel call in this thread through one strategy (tests)."""
    prev = getattr(_config, "strategy", None)
    _config.strategy = name
    try:
        yield
    finally:
        _config.strategy = prev


@contextmanager
def default_workers(n):
    prev = getattr(_config, "workers", 1)
    _config.workers = int(n)
    try:
        yield
    finally:
        _config.workers = prev


def select_format(kernel, direction="forward"):
    """Preferred sparse format for a kernel dispatch.

    gspmm reduces per destination, so it wants the in-adjacency grouping
    (csc). Its backward runs on the reverse graph, whose csc is physically
    the forward graph's csr via the shared cache pair, so the backward
    reuses the forward indexes with zero conversions. gsddmm writes one row
    per edge and iterates the edge list directly (coo).
    """
    if kernel == "gspmm":
        return "csc"
    if kernel == "gsddmm":
        return "coo"
    raise ValueError("unknown kernel %r" % (kernel,))


# ---------------------------------------------------------------------------
# operand plumbing


def _as_matrix(name, M, rows):
    if M is None:
        return None
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("%s must be a 2-D matrix, got ndim=%d" % (name, M.ndim))
    if M.shape[0] != rows:
        raise ValueError("%s has %d rows, expected %d" % (name, M.shape[0], rows))
    return M


def _operands_for(g, phi, X, Y, W):
    """Validate presence and shapes; return (X, Y, W, out_dim)."""
    needed = set(phi.targets)
    if "src" in needed and X is None:
        raise ValueError("phi %s needs X (source rows)" % phi.describe())
    if "dst" in needed and Y is None:
        raise ValueError("phi %s needs Y (destination rows)" % phi.describe())
    if "edge" in needed and W is None:
        raise ValueError("phi %s needs W (edge rows)" % phi.describe())
    X = _as_matrix("X", X, g.num_nodes) if "src" in needed else None
    Y = _as_matrix("Y", Y, g.num_nodes) if "dst" in needed else None
    W = _as_matrix("W", W, g.num_edges) if "edge" in needed else None

    def dim(target):
        return {"src": X, "dst": Y, "edge": W}[target].shape[1]

    if phi.op in ("copy_lhs", "copy_rhs"):
        d_out = dim(phi.targets[0])
    elif phi.op == "dot":
        dl, dr = dim(phi.lhs_target), dim(phi.rhs_target)
        if dl != dr:
            raise ValueError("dot needs equal operand dims, got %d and %d" % (dl, dr))
        d_out = 1
    else:
        dl, dr = dim(phi.lhs_target), dim(phi.rhs_target)
        if dl != dr and 1 not in (dl, dr):
            raise ValueError("operand dims %d and %d are not broadcastable" % (dl, dr))
        d_out = max(dl, dr)
    return X, Y, W, d_out


def _gather(target, X, Y, W, u, v, e):
    if target == "src":
        return X[u]
    if target == "dst":
        return Y[v]
    return W[e]


def _check_divisor(b, e):
    zero = b == 0.0
    if zero.any():
        row = int(np.argwhere(zero)[0][0])
        raise ZeroDivisionError(
            "division by zero in edge message at edge id %d" % int(e[row]))


def _chunk_messages(phi, X, Y, W, u, v, e):
    """Messages for one edge chunk. Returns (msgs, tracked_bytes);
    the caller releases tracked_bytes when done with msgs."""
    a = _gather(phi.targets[0], X, Y, W, u, v, e)
    if phi.op in ("copy_lhs", "copy_rhs"):
        accounting.register_bytes(a.nbytes)
        return a, a.nbytes
    b = _gather(phi.rhs_target, X, Y, W, u, v, e)
    held = a.nbytes + b.nbytes
    accounting.register_bytes(held)
    if phi.op == "add":
        m = a + b
    elif phi.op == "sub":
        m = a - b
    elif phi.op == "mul":
        m = a * b
    elif phi.op == "div":
        _check_divisor(b, e)
        m = a / b
    else:
        # dot via multiply + row sum: the same reduction order every
        # strategy uses, keeping extrema comparisons bit-identical
        m = (a * b).sum(axis=1)[:, None]
    accounting.register_bytes(m.nbytes)
    accounting.release_bytes(held)
    return m, m.nbytes


def _edges_in_format(g, fmt):
    """(u, v, e) int arrays enumerating every edge in the format's order."""
    if fmt == "coo":
        src, dst, eids = g.coo()
        return src, dst, eids
    if fmt == "csr":
        adj = g.to_csr()
        counts = np.diff(adj.indptr)
        u = np.repeat(np.arange(g.num_nodes, dtype=np.uint32), counts)
        return u, adj.indices, adj.edge_ids
    if fmt == "csc":
        adj = g.to_csc()
        counts = np.diff(adj.indptr)
        v = np.repeat(np.arange(g.num_nodes, dtype=np.uint32), counts)
        return adj.indices, v, adj.edge_ids
    raise ValueError("unknown format %r" % (fmt,))


def _split_ranges(total, parts):
    bounds = np.linspace(0, total, parts + 1).astype(np.int64)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(parts)
            if bounds[i] < bounds[i + 1]]


def _run_parts(fn, parts, workers):
    if not parts:
        return
    if workers <= 1 or len(parts) == 1:
        for p in parts:
            fn(*p)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *p) for p in parts]
        for f in futures:
            f.result()


# ---------------------------------------------------------------------------
# grouped (per-destination) reduction walk, shared by several strategies


class _GroupedWalk:
    """Chunked reduction over a destination-grouped index.

    Processes runs of whole segments with ufunc.reduceat on blocks of at
    most `block` edges; a single segment longer than `block` is folded in
    sub-chunks with a carry, so no temporary exceeds block x d.
    """

    def __init__(self, phi, rho, X, Y, W, adj, out, arg, block):
        self.phi, self.rho = phi, rho
        self.X, self.Y, self.W = X, Y, W
        self.indptr = adj.indptr
        self.indices = adj.indices
        self.eids = adj.edge_ids
        self.counts = np.diff(adj.indptr)
        self.out, self.arg = out, arg
        self.block = block
        if rho in ("max", "min"):
            self.ufunc = np.maximum if rho == "max" else np.minimum
            self.better = np.greater if rho == "max" else np.less

    def run(self, lo, hi):
        indptr = self.indptr
        cur = lo
        while cur < hi:
            pos = indptr[cur]
            end = int(np.searchsorted(indptr, pos + self.block, side="right")) - 1
            end = min(end, hi)
            if end <= cur:
                self._single(cur)
                cur += 1
            else:
                self._multi(cur, end)
                cur = end

    def _messages(self, p0, p1, n0=None, n1=None, v_for=None):
        u = self.indices[p0:p1]
        e = self.eids[p0:p1]
        if v_for is not None:
            v = np.full(p1 - p0, v_for, dtype=np.int64)
        else:
            v = np.repeat(np.arange(n0, n1, dtype=np.int64), self.counts[n0:n1])
        return _chunk_messages(self.phi, self.X, self.Y, self.W, u, v, e), e

    def _multi(self, n0, n1):
        p0, p1 = self.indptr[n0], self.indptr[n1]
        if p1 == p0:
            return
        (msgs, held), e = self._messages(p0, p1, n0=n0, n1=n1)
        seg_counts = self.counts[n0:n1]
        # reduceat over nonempty segments only; an empty segment's start
        # equals its neighbor's and would otherwise split the wrong range
        nz = np.flatnonzero(seg_counts > 0)
        starts = (self.indptr[n0:n1] - p0)[nz]
        if self.rho in ("sum", "mean"):
            res = np.zeros((n1 - n0, msgs.shape[1]))
            res[nz] = np.add.reduceat(msgs, starts, axis=0)
            self.out[n0:n1] = res
        else:
            res = np.zeros((n1 - n0, msgs.shape[1]))
            res[nz] = self.ufunc.reduceat(msgs, starts, axis=0)
            self.out[n0:n1] = res
            rep = np.repeat(res, seg_counts, axis=0)
            eid_col = e.astype(np.int64)[:, None]
            masked = np.where(msgs == rep, eid_col, _INT_MAX)
            accounting.register_bytes(rep.nbytes + masked.nbytes)
            args = np.full((n1 - n0, msgs.shape[1]), -1, dtype=np.int64)
            args[nz] = np.minimum.reduceat(masked, starts, axis=0)
            self.arg[n0:n1] = args
            accounting.release_bytes(rep.nbytes + masked.nbytes)
        accounting.release_bytes(held)

    def _single(self, v):
        p0, p1 = self.indptr[v], self.indptr[v + 1]
        acc = None
        acc_arg = None
        for q0 in range(p0, p1, self.block):
            q1 = min(q0 + self.block, p1)
            (msgs, held), e = self._messages(q0, q1, v_for=v)
            if self.rho in ("sum", "mean"):
                part = msgs.sum(axis=0)
                acc = part if acc is None else acc + part
            else:
                part = self.ufunc.reduce(msgs, axis=0)
                eid_col = e.astype(np.int64)[:, None]
                part_arg = np.where(msgs == part[None, :], eid_col, _INT_MAX).min(axis=0)
                if acc is None:
                    acc, acc_arg = part, part_arg
                else:
                    gain = self.better(part, acc)
                    tie = part == acc
                    acc_arg = np.where(gain, part_arg,
                                       np.where(tie, np.minimum(acc_arg, part_arg), acc_arg))
                    acc = self.ufunc(acc, part)
            accounting.release_bytes(held)
        if acc is not None:
            self.out[v] = acc
            if acc_arg is not None:
                self.arg[v] = acc_arg

    def partial(self, node, q0, q1):
        """Reduce positions [q0, q1), a fragment of node's segment.

        Returns (value_row,) for sum/mean or (value_row, arg_row) for extrema.
        """
        acc = None
        acc_arg = None
        for c0 in range(q0, q1, self.block):
            c1 = min(c0 + self.block, q1)
            (msgs, held), e = self._messages(c0, c1, v_for=node)
            if self.rho in ("sum", "mean"):
                part = msgs.sum(axis=0)
                acc = part if acc is None else acc + part
            else:
                part = self.ufunc.reduce(msgs, axis=0)
                eid_col = e.astype(np.int64)[:, None]
                part_arg = np.where(msgs == part[None, :], eid_col, _INT_MAX).min(axis=0)
                if acc is None:
                    acc, acc_arg = part, part_arg
                else:
                    gain = self.better(part, acc)
                    tie = part == acc
                    acc_arg = np.where(gain, part_arg,
                                       np.where(tie, np.minimum(acc_arg, part_arg), acc_arg))
                    acc = self.ufunc(acc, part)
            accounting.release_bytes(held)
        return (acc,) if acc_arg is None else (acc, acc_arg)


# ---------------------------------------------------------------------------
# gspmm strategies


def _gspmm_node_parallel(g, phi, rho, X, Y, W, d_out, workers, block):
    out = accounting.register(np.zeros((g.num_nodes, d_out)))
    arg = None
    if rho in ("max", "min"):
        arg = np.full((g.num_nodes, d_out), -1, dtype=np.int64)
        accounting.register_bytes(arg.nbytes)
    walk = _GroupedWalk(phi, rho, X, Y, W, g.to_csc(), out, arg, block)
    parts = _split_ranges(g.num_nodes, max(1, workers))
    _run_parts(walk.run, parts, workers)
    return out, arg, walk.counts


def _gspmm_feature_parallel(g, phi, rho, X, Y, W, d_out, workers, block):
    out = accounting.register(np.zeros((g.num_nodes, d_out)))
    arg = None
    if rho in ("max", "min"):
        arg = np.full((g.num_nodes, d_out), -1, dtype=np.int64)
        accounting.register_bytes(arg.nbytes)
    adj = g.to_csc()
    counts = np.diff(adj.indptr)

    def slice_op(M, c0, c1):
        if M is None or M.shape[1] != d_out:
            return M  # single-column operands broadcast into every slice
        return M[:, c0:c1]

    col_parts = _split_ranges(d_out, max(1, workers))
    if phi.op == "dot":
        col_parts = [(0, 1)]  # the dot folds all columns; nothing to split

    def work(c0, c1):
        if phi.op == "dot":
            sx, sy, sw = X, Y, W
        else:
            sx, sy, sw = (slice_op(M, c0, c1) for M in (X, Y, W))
        sub_arg = arg[:, c0:c1] if arg is not None else None
        walk = _GroupedWalk(phi, rho, sx, sy, sw, adj, out[:, c0:c1], sub_arg, block)
        walk.run(0, g.num_nodes)

    _run_parts(work, col_parts, workers)
    return out, arg, counts


def _gspmm_edge_parallel(g, phi, rho, X, Y, W, d_out, workers, block):
    """Destination-contiguous edge partition; boundary rows go through small
    per-worker partial buffers merged at the end (no atomics, no |E| temps)."""
    out = accounting.register(np.zeros((g.num_nodes, d_out)))
    arg = None
    if rho in ("max", "min"):
        arg = np.full((g.num_nodes, d_out), -1, dtype=np.int64)
        accounting.register_bytes(arg.nbytes)
    adj = g.to_csc()
    walk = _GroupedWalk(phi, rho, X, Y, W, adj, out, arg, block)
    indptr = adj.indptr
    m = g.num_edges
    parts = _split_ranges(m, max(1, workers))
    partials = []
    partials_lock = threading.Lock()
    accounting.register_bytes(2 * max(1, workers) * d_out * 8)  # fragment buffers

    def work(q0, q1):
        mine = []
        va = int(np.searchsorted(indptr, q0, side="right")) - 1
        vb = int(np.searchsorted(indptr, q1 - 1, side="right")) - 1
        full_lo, full_hi = va, vb + 1
        frag_lo = q0
        if indptr[va] < q0:  # head fragment of node va
            h_end = min(int(indptr[va + 1]), q1)
            mine.append((va, walk.partial(va, q0, h_end)))
            full_lo = va + 1
            frag_lo = h_end
        if indptr[vb + 1] > q1 and vb >= full_lo:  # tail fragment of node vb
            mine.append((vb, walk.partial(vb, max(int(indptr[vb]), frag_lo), q1)))
            full_hi = vb
        if full_lo < full_hi:
            walk.run(full_lo, full_hi)
        with partials_lock:
            partials.extend(mine)

    _run_parts(work, parts, workers)

    # merge fragments: a fragmented node is never written by the direct walk
    by_node = {}
    for v, vals in partials:
        by_node.setdefault(v, []).append(vals)
    for v, pieces in by_node.items():
        if rho in ("sum", "mean"):
            out[v] = np.sum([p[0] for p in pieces], axis=0)
        else:
            acc, acc_arg = pieces[0]
            for val, varg in pieces[1:]:
                gain = walk.better(val, acc)
                tie = val == acc
                acc_arg = np.where(gain, varg,
                                   np.where(tie, np.minimum(acc_arg, varg), acc_arg))
                acc = walk.ufunc(acc, val)
            out[v] = acc
            arg[v] = acc_arg
    accounting.release_bytes(2 * max(1, workers) * d_out * 8)
    return out, arg, np.diff(indptr)


def _gspmm_edge_parallel_atomic(g, phi, rho, X, Y, W, d_out, workers, block, fmt):
    """Arbitrary-order edge partition with synchronized scatter updates.

    Python has no hardware atomics, so a shared lock guards each chunk's
    read-modify-write. Exists to make synchronization cost measurable; the
    buffered edge_parallel is the production variant.
    """
    out = accounting.register(np.zeros((g.num_nodes, d_out)))
    arg = None
    filled = None
    if rho in ("max", "min"):
        arg = np.full((g.num_nodes, d_out), -1, dtype=np.int64)
        filled = np.zeros(g.num_nodes, dtype=bool)
        accounting.register_bytes(arg.nbytes + filled.nbytes)
    u_all, v_all, e_all = _edges_in_format(g, fmt)
    m = g.num_edges
    lock = threading.Lock()
    ufunc = np.maximum if rho == "max" else np.minimum
    better = np.greater if rho == "max" else np.less

    def work(q0, q1):
        for c0 in range(q0, q1, block):
            c1 = min(c0 + block, q1)
            u, v, e = u_all[c0:c1], v_all[c0:c1], e_all[c0:c1]
            msgs, held = _chunk_messages(phi, X, Y, W, u, v, e)
            if rho in ("sum", "mean"):
                with lock:
                    np.add.at(out, v.astype(np.int64), msgs)
            else:
                order = np.argsort(v, kind="stable")
                vs, ms = v[order].astype(np.int64), msgs[order]
                es = e[order].astype(np.int64)
                starts = np.flatnonzero(np.r_[True, vs[1:] != vs[:-1]])
                uniq = vs[starts]
                seg = np.diff(np.r_[starts, len(vs)])
                cext = ufunc.reduceat(ms, starts, axis=0)
                rep = np.repeat(cext, seg, axis=0)
                carg = np.minimum.reduceat(
                    np.where(ms == rep, es[:, None], _INT_MAX), starts, axis=0)
                with lock:
                    fresh = ~filled[uniq]
                    if fresh.any():
                        out[uniq[fresh]] = cext[fresh]
                        arg[uniq[fresh]] = carg[fresh]
                        filled[uniq] = True
                    stale = ~fresh
                    if stale.any():
                        tgt = uniq[stale]
                        val, varg = cext[stale], carg[stale]
                        gain = better(val, out[tgt])
                        tie = val == out[tgt]
                        arg[tgt] = np.where(gain, varg,
                                            np.where(tie, np.minimum(arg[tgt], varg), arg[tgt]))
                        out[tgt] = ufunc(out[tgt], val)
            accounting.release_bytes(held)

    _run_parts(work, _split_ranges(m, max(1, workers)), workers)
    counts = np.bincount(v_all, minlength=g.num_nodes).astype(np.int64)
    if filled is not None:
        accounting.release_bytes(filled.nbytes)
    return out, arg, counts


def _gspmm_serial(g, phi, rho, X, Y, W, d_out):
    """Literal transcription of the definition: loop destinations, gather
    inbound messages, reduce. Groups edges with its own argsort pass so it
    shares no index-building code with the production strategies."""
    n, m = g.num_nodes, g.num_edges
    src, dst, _ = g.coo()
    order = np.argsort(dst, kind="stable")
    ds, us = dst[order], src[order]
    es = order.astype(np.int64)
    starts = np.searchsorted(ds, np.arange(n + 1))
    out = accounting.register(np.zeros((n, d_out)))
    arg = None
    if rho in ("max", "min"):
        arg = np.full((n, d_out), -1, dtype=np.int64)
        accounting.register_bytes(arg.nbytes)
    counts = np.bincount(dst, minlength=n).astype(np.int64)
    for v in range(n):
        lo, hi = starts[v], starts[v + 1]
        if lo == hi:
            continue
        u, e = us[lo:hi], es[lo:hi]
        a = _gather(phi.targets[0], X, Y, W, u, np.full(hi - lo, v), e)
        if phi.op in ("copy_lhs", "copy_rhs"):
            msgs = a
        else:
            b = _gather(phi.rhs_target, X, Y, W, u, np.full(hi - lo, v), e)
            if phi.op == "add":
                msgs = a + b
            elif phi.op == "sub":
                msgs = a - b
            elif phi.op == "mul":
                msgs = a * b
            elif phi.op == "div":
                _check_divisor(b, e)
                msgs = a / b
            else:
                msgs = (a * b).sum(axis=1)[:, None]
        if rho in ("sum", "mean"):
            out[v] = msgs.sum(axis=0)  # the dispatcher applies 1/degree
        else:
            red = msgs.max(axis=0) if rho == "max" else msgs.min(axis=0)
            out[v] = red
            hit = msgs == red[None, :]
            arg[v] = np.where(hit, e[:, None], _INT_MAX).min(axis=0)
    return out, arg, counts


def gspmm(g, phi, rho, X=None, Y=None, W=None, strategy=None, num_workers=None,
          fmt=None, block_edges=None):
    """Reduce per-edge messages into one output row per destination node.

    Returns (Z, aux): Z is (num_nodes, d_out); aux is None for sum, the
    in-degree vector for mean, and an ArgExtrema for max/min.
    """
    if rho not in REDUCERS:
        raise ValueError("unknown reducer %r" % (rho,))
    X, Y, W, d_out = _operands_for(g, phi, X, Y, W)
    strategy = strategy or _forced_strategy() or "node_parallel"
    if strategy not in GSPMM_STRATEGIES:
        raise ValueError("unknown gspmm strategy %r" % (strategy,))
    allowed = _GSPMM_FORMATS[strategy]
    fmt = fmt or allowed[0]
    if fmt not in allowed:
        raise ValueError("gspmm strategy %s cannot run on format %s" % (strategy, fmt))
    workers = num_workers if num_workers is not None else _default_workers()
    block = block_edges or BLOCK_EDGES
    accounting.log_dispatch("gspmm", g.uid, phi.describe(), rho, strategy,
                            g.num_nodes, d_out)

    if strategy == "node_parallel":
        out, arg, counts = _gspmm_node_parallel(g, phi, rho, X, Y, W, d_out, workers, block)
    elif strategy == "edge_parallel":
        out, arg, counts = _gspmm_edge_parallel(g, phi, rho, X, Y, W, d_out, workers, block)
    elif strategy == "edge_parallel_atomic":
        out, arg, counts = _gspmm_edge_parallel_atomic(
            g, phi, rho, X, Y, W, d_out, workers, block, fmt)
    elif strategy == "feature_parallel":
        out, arg, counts = _gspmm_feature_parallel(g, phi, rho, X, Y, W, d_out, workers, block)
    else:
        out, arg, counts = _gspmm_serial(g, phi, rho, X, Y, W, d_out)

    if rho == "mean":
        nz = counts > 0
        out[nz] /= counts[nz, None]
        return out, counts
    if rho in ("max", "min"):
        return out, ArgExtrema(arg)
    return out, None


# ---------------------------------------------------------------------------
# gsddmm strategies


def _gsddmm_chunked(phi, X, Y, W, u_all, v_all, e_all, out, q0, q1, block, cols=None):
    for c0 in range(q0, q1, block):
        c1 = min(c0 + block, q1)
        u, v, e = u_all[c0:c1], v_all[c0:c1], e_all[c0:c1]
        msgs, held = _chunk_messages(phi, X, Y, W, u, v, e)
        if cols is None:
            out[e.astype(np.int64)] = msgs
        else:
            out[e.astype(np.int64), cols[0]:cols[1]] = msgs
        accounting.release_bytes(held)


def gsddmm(g, phi, X=None, Y=None, W=None, strategy=None, num_workers=None,
           fmt=None, block_edges=None):
    """Per-edge messages: one output row per edge, in edge-id order."""
    X, Y, W, d_out = _operands_for(g, phi, X, Y, W)
    if strategy == "edge_parallel_atomic":
        raise ValueError("gsddmm writes disjoint rows; it has no atomic variant")
    forced = _forced_strategy()
    if forced == "edge_parallel_atomic":
        forced = "edge_parallel"  # ambient override degrades to the plain variant
    strategy = strategy or forced or "edge_parallel"
    if strategy not in GSDDMM_STRATEGIES:
        raise ValueError("unknown gsddmm strategy %r" % (strategy,))
    allowed = _GSDDMM_FORMATS[strategy]
    fmt = fmt or allowed[0]
    if fmt not in allowed:
        raise ValueError("gsddmm strategy %s cannot run on format %s" % (strategy, fmt))
    workers = num_workers if num_workers is not None else _default_workers()
    block = block_edges or BLOCK_EDGES
    m = g.num_edges
    accounting.log_dispatch("gsddmm", g.uid, phi.describe(), "-", strategy, m, d_out)
    out = accounting.register(np.empty((m, d_out)))

    if strategy == "serial_reference":
        src, dst, _ = g.coo()
        for e in range(m):
            u, v = int(src[e]), int(dst[e])
            a = {"src": X, "dst": Y, "edge": W}[phi.targets[0]]
            a = a[u if phi.targets[0] == "src" else (v if phi.targets[0] == "dst" else e)]
            if phi.op in ("copy_lhs", "copy_rhs"):
                out[e] = a
                continue
            bm = {"src": X, "dst": Y, "edge": W}[phi.rhs_target]
            b = bm[u if phi.rhs_target == "src" else (v if phi.rhs_target == "dst" else e)]
            if phi.op == "add":
                out[e] = a + b
            elif phi.op == "sub":
                out[e] = a - b
            elif phi.op == "mul":
                out[e] = a * b
            elif phi.op == "div":
                if (b == 0.0).any():
                    raise ZeroDivisionError(
                        "division by zero in edge message at edge id %d" % e)
                out[e] = a / b
            else:
                out[e] = float(a @ b)
        return out

    if strategy == "feature_parallel":
        u_all, v_all, e_all = _edges_in_format(g, fmt)
        col_parts = _split_ranges(d_out, max(1, workers))
        if phi.op == "dot":
            col_parts = [(0, 1)]

        def colwork(c0, c1):
            if phi.op == "dot":
                sx, sy, sw = X, Y, W
            else:
                def sl(M):
                    return M if M is None or M.shape[1] != d_out else M[:, c0:c1]
                sx, sy, sw = sl(X), sl(Y), sl(W)
            _gsddmm_chunked(phi, sx, sy, sw, u_all, v_all, e_all, out, 0, m,
                            block, cols=(c0, c1))

        _run_parts(colwork, col_parts, workers)
        return out

    if strategy == "node_parallel":
        adj = g.to_csr() if fmt == "csr" else g.to_csc()
        counts = np.diff(adj.indptr)
        grouped = np.repeat(np.arange(g.num_nodes, dtype=np.uint32), counts)
        if fmt == "csr":
            u_all, v_all = grouped, adj.indices
        else:
            u_all, v_all = adj.indices, grouped
        e_all = adj.edge_ids
        node_parts = _split_ranges(g.num_nodes, max(1, workers))

        def nodework(n0, n1):
            _gsddmm_chunked(phi, X, Y, W, u_all, v_all, e_all, out,
                            int(adj.indptr[n0]), int(adj.indptr[n1]), block)

        _run_parts(nodework, node_parts, workers)
        return out

    # edge_parallel
    u_all, v_all, e_all = _edges_in_format(g, fmt)

    def edgework(q0, q1):
        _gsddmm_chunked(phi, X, Y, W, u_all, v_all, e_all, out, q0, q1, block)

    _run_parts(edgework, _split_ranges(m, max(1, workers)), workers)
    return out


# ---------------------------------------------------------------------------
# gradient routing for extrema reducers


def route_extrema_grad(g, aux, dZ, d_out):
    """Scatter per-node gradients back to the edges that won the max/min.

    For each output cell (v, k), the upstream gradient flows to edge
    aux.arg_edge[v, k] only. Returns an (num_edges, d_out) matrix, logged as
    a gsddmm dispatch since it is an edge-output kernel on g.
    """
    accounting.log_dispatch("gsddmm", g.uid, "argext_route", "-",
                            "edge_parallel", g.num_edges, d_out)
    dM = accounting.register(np.zeros((g.num_edges, d_out)))
    arg = aux.arg_edge
    vi, ci = np.nonzero(arg >= 0)
    # every (edge, column) pair is unique: an edge feeds exactly one node
    dM[arg[vi, ci], ci] = dZ[vi, ci]
    return dM
