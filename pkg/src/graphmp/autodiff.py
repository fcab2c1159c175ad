"""Reverse-mode differentiation over kernel and dense matrix ops.

A Tape records every op in execution order as a TapeNode holding the operand
values it will need (no recomputation at backward time). ``Tape.backward``
walks the nodes strictly in reverse, accumulating gradients additively into
every marked leaf.

The backward of each kernel is itself expressed with the same two kernels
plus dense elementwise glue, never bespoke sparse loops:

* gradients w.r.t. X (source rows) run gspmm on the reverse graph,
* gradients w.r.t. Y (destination rows) run gspmm on the graph itself,
* gradients w.r.t. W (edge rows) run gsddmm on the graph itself,
* the reduce of every such backward kernel is sum; max/min forward passes
  first route the upstream gradient to each cell's winning edge.

Because the reverse view shares the forward graph's adjacency pair, those
backward dispatches reuse the already-built indexes as-is.
"""

from dataclasses import dataclass

import numpy as np

from . import accounting
from . import kernels
from .graph import reverse


class Var:
    """A matrix tracked on a tape. ``value`` is the plain ndarray."""

    __slots__ = ("value", "tape", "node")

    def __init__(self, value, tape, node=None):
        self.value = value
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return "Var(shape=%s%s)" % (self.value.shape,
                                    ", leaf" if self.node is None else "")


class TapeNode:
    __slots__ = ("op", "inputs", "output", "ctx", "backward_fn")

    def __init__(self, op, inputs, output, ctx, backward_fn):
        self.op = op
        self.inputs = inputs          # tuple of Var or None (constant slot)
        self.output = output
        self.ctx = ctx                # saved forward values, graph handles
        self.backward_fn = backward_fn


class Tape:
    """Execution-ordered op record with a single strict-reverse gradient pass."""

    def __init__(self):
        self.nodes = []
        self.leaves = []

    def leaf(self, array):
        """Mark array as a differentiable input; returns its Var handle."""
        array = np.asarray(array, dtype=np.float64)
        if array.ndim == 1:
            array = array[:, None]
        v = Var(array, self, node=None)
        self.leaves.append(v)
        return v

    def record(self, op, inputs, value, ctx, backward_fn):
        out = Var(value, self)
        node = TapeNode(op, tuple(inputs), out, ctx, backward_fn)
        out.node = node
        self.nodes.append(node)
        return out

    def backward(self, loss):
        """Gradients of scalar loss w.r.t. every leaf, as {leaf Var: ndarray}."""
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ValueError("loss is not a variable recorded on this tape")
        if loss.value.size != 1:
            raise ValueError("loss must be scalar, got shape %s" % (loss.value.shape,))
        if not self.nodes:
            raise ValueError("backward called before any op was recorded")
        grads = {loss: np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            up = grads.pop(node.output, None)
            if up is None:
                continue  # dead branch: nothing downstream used it
            for var, g in zip(node.inputs, node.backward_fn(up, node.ctx)):
                if var is None or g is None:
                    continue
                have = grads.get(var)
                grads[var] = g if have is None else have + g
        out = {}
        for leaf in self.leaves:
            out[leaf] = grads.get(leaf)
            if out[leaf] is None:
                out[leaf] = np.zeros_like(leaf.value)
        return out


def _value(x):
    return x.value if isinstance(x, Var) else (
        None if x is None else np.asarray(x, dtype=np.float64))


def _tape_of(*xs):
    tapes = {x.tape for x in xs if isinstance(x, Var)}
    if not tapes:
        return None
    if len(tapes) > 1:
        raise ValueError("operands live on different tapes")
    return tapes.pop()


def _var_or(x):
    return x if isinstance(x, Var) else None


def _reg(arr):
    return accounting.register(arr)


# ---------------------------------------------------------------------------
# dense taped ops


def matmul(a, b):
    av, bv = _value(a), _value(b)
    out = _reg(av @ bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(up, ctx):
        return [_reg(up @ ctx["b"].T), _reg(ctx["a"].T @ up)]

    return tape.record("matmul", (_var_or(a), _var_or(b)), out,
                       {"a": av, "b": bv}, back)


def _unbroadcast(up, shape):
    g = up
    if shape[0] == 1 and up.shape[0] > 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and up.shape[1] > 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def add(a, b):
    """Elementwise sum; either side may be (1, d) or (n, 1) and broadcast."""
    av, bv = _value(a), _value(b)
    out = _reg(av + bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(up, ctx):
        return [_unbroadcast(up, ctx["sa"]), _unbroadcast(up, ctx["sb"])]

    return tape.record("add", (_var_or(a), _var_or(b)), out,
                       {"sa": av.shape, "sb": bv.shape}, back)


def scale(a, c):
    av = _value(a)
    out = _reg(av * float(c))
    tape = _tape_of(a)
    if tape is None:
        return out

    def back(up, ctx):
        return [up * ctx["c"]]

    return tape.record("scale", (_var_or(a),), out, {"c": float(c)}, back)


def relu(a):
    av = _value(a)
    out = _reg(np.maximum(av, 0.0))
    tape = _tape_of(a)
    if tape is None:
        return out

    def back(up, ctx):
        return [_reg(up * (ctx["out"] > 0.0))]

    return tape.record("relu", (_var_or(a),), out, {"out": out}, back)


def exp(a):
    av = _value(a)
    out = _reg(np.exp(av))
    tape = _tape_of(a)
    if tape is None:
        return out

    def back(up, ctx):
        return [_reg(up * ctx["out"])]

    return tape.record("exp", (_var_or(a),), out, {"out": out}, back)


def softmax_rows(a):
    av = _value(a)
    z = av - av.max(axis=1, keepdims=True)
    ez = np.exp(z)
    out = _reg(ez / ez.sum(axis=1, keepdims=True))
    tape = _tape_of(a)
    if tape is None:
        return out

    def back(up, ctx):
        s = ctx["out"]
        return [_reg(s * (up - (up * s).sum(axis=1, keepdims=True)))]

    return tape.record("softmax_rows", (_var_or(a),), out, {"out": out}, back)


def xent_loss(logits, labels):
    """Mean cross-entropy of row-softmax probabilities against int labels."""
    lv = _value(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = lv.shape[0]
    z = lv - lv.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = np.array([[-logp[np.arange(n), labels].mean()]])
    tape = _tape_of(logits)
    if tape is None:
        return loss

    def back(up, ctx):
        p = np.exp(ctx["logp"])
        p[np.arange(ctx["n"]), ctx["labels"]] -= 1.0
        return [_reg(float(up[0, 0]) * p / ctx["n"])]

    return tape.record("xent_loss", (_var_or(logits),), loss,
                       {"logp": logp, "labels": labels, "n": n}, back)


def hconcat(parts):
    """Column-wise concatenation of equal-row matrices."""
    vals = [_value(p) for p in parts]
    out = _reg(np.concatenate(vals, axis=1))
    tape = _tape_of(*parts)
    if tape is None:
        return out
    widths = [v.shape[1] for v in vals]

    def back(up, ctx):
        outs, c = [], 0
        for w in ctx["widths"]:
            outs.append(up[:, c:c + w])
            c += w
        return outs

    return tape.record("hconcat", tuple(_var_or(p) for p in parts), out,
                       {"widths": widths}, back)


# ---------------------------------------------------------------------------
# gradient routing: edge-message gradients -> operand gradients, as kernels


@dataclass
class GradBundle:
    dx: np.ndarray = None
    dy: np.ndarray = None
    dw: np.ndarray = None


def _safe_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(b != 0.0, a / b, 0.0)
    return out


_REV_SLOT = {"src": "dst", "dst": "src", "edge": "edge"}


def _route(g, t, up, up_slot, kind, p_target=None, P=None, mode="ew"):
    """Sum up_e * factor_e over the edges keyed to target t.

    up sits at a kernel slot ('dst' for node-keyed upstream, 'edge' for
    edge-keyed); the factor is 1 (kind 'one'), the value at p_target
    ('val'), or its reciprocal ('inv'). mode 'dot' row-reduces the product
    (used when the receiving operand is a single broadcast column). Output
    is keyed by t: per-edge rows for t='edge', reduced rows otherwise.
    """
    if kind != "one" and p_target == up_slot:
        comb = up * P if kind == "val" else _safe_div(up, P)
        if mode == "dot":
            comb = comb.sum(axis=1, keepdims=True)
        _reg(comb)
        return _route(g, t, comb, up_slot, "one")

    if t == "edge":
        if up_slot == "edge":
            if kind == "one":
                return up
            opname = {"val": "mul" if mode == "ew" else "dot", "inv": "div"}[kind]
            phi = kernels.MessageFunc(opname, "edge", p_target)
            kw = {"W": up, ("X" if p_target == "src" else "Y"): P}
            return kernels.gsddmm(g, phi, **kw)
        # upstream is node-keyed at the destination
        if kind == "one":
            return kernels.gsddmm(g, kernels.copy("dst"), Y=up)
        opname = {"val": "mul" if mode == "ew" else "dot", "inv": "div"}[kind]
        phi = kernels.MessageFunc(opname, "dst", p_target)
        kw = {"Y": up, ("X" if p_target == "src" else "W"): P}
        return kernels.gsddmm(g, phi, **kw)

    # node-keyed output: reduce with gspmm; src grads run on the reverse view
    if t == "dst":
        gg, smap = g, {"src": "src", "dst": "dst", "edge": "edge"}
    else:
        gg, smap = reverse(g), _REV_SLOT
    su = smap[up_slot]
    kw = {{"src": "X", "dst": "Y", "edge": "W"}[su]: up}
    if kind == "one":
        phi = kernels.copy(su)
    else:
        sp = smap[p_target]
        opname = {"val": "mul" if mode == "ew" else "dot", "inv": "div"}[kind]
        phi = kernels.MessageFunc(opname, su, sp)
        kw[{"src": "X", "dst": "Y", "edge": "W"}[sp]] = P
    Z, _ = kernels.gspmm(gg, phi, "sum", **kw)
    return Z


def _role_grad(g, phi, t, other_t, X, Y, W, up, up_slot):
    """Gradient w.r.t. the operand at target t, reduced into t's key space."""
    vals = {"src": X, "dst": Y, "edge": W}
    own = vals[t]
    d_own = own.shape[1]
    d_up = up.shape[1]
    op = phi.op

    if op in ("copy_lhs", "copy_rhs", "add", "sub"):
        eff = up if d_own == d_up else _reg(up.sum(axis=1, keepdims=True))
        res = _route(g, t, eff, up_slot, "one")
        if op == "sub" and t == phi.rhs_target:
            res = -res
        return res

    other = vals[other_t]
    if op == "mul":
        mode = "dot" if (d_own == 1 and d_up > 1) else "ew"
        return _route(g, t, up, up_slot, "val", other_t, other, mode)

    if op == "dot":
        # upstream has one column; the kernel broadcasts it across other's dims
        return _route(g, t, up, up_slot, "val", other_t, other, "ew")

    # div
    if t == phi.lhs_target:
        if d_own == 1 and d_up > 1:
            rec = _reg(_safe_div(1.0, other))
            return _route(g, t, up, up_slot, "val", other_t, rec, "dot")
        return _route(g, t, up, up_slot, "inv", other_t, other)
    mode = "dot" if (d_own == 1 and d_up > 1) else "ew"
    s = _route(g, t, up, up_slot, "val", other_t, other, mode)
    # rows no edge touches keep s == 0; guard their 0/0 rather than raise
    return _reg(-_safe_div(s, own * own))


def _edge_grads(g, phi, X, Y, W, up, up_slot, needs):
    roles = []
    if phi.op == "copy_lhs":
        roles = [(phi.lhs_target, None)]
    elif phi.op == "copy_rhs":
        roles = [(phi.rhs_target, None)]
    else:
        roles = [(phi.lhs_target, phi.rhs_target), (phi.rhs_target, phi.lhs_target)]
    slot_need = {"src": "x", "dst": "y", "edge": "w"}
    bundle = GradBundle()
    for t, other_t in roles:
        if slot_need[t] not in needs:
            continue
        res = _role_grad(g, phi, t, other_t, X, Y, W, up, up_slot)
        if t == "src":
            bundle.dx = res
        elif t == "dst":
            bundle.dy = res
        else:
            bundle.dw = res
    return bundle


def gspmm_backward(g, phi, rho, X=None, Y=None, W=None, Z=None, aux=None,
                   dZ=None, needs=("x", "y", "w")):
    """Operand gradients of gspmm(g, phi, rho). Z is accepted for signature
    symmetry; the built-in reducers never need it (extrema use aux)."""
    if rho == "sum":
        up, up_slot = dZ, "dst"
    elif rho == "mean":
        up = _reg(_safe_div(dZ, np.asarray(aux, dtype=np.float64)[:, None]))
        up_slot = "dst"
    elif rho in ("max", "min"):
        up = kernels.route_extrema_grad(g, aux, dZ, dZ.shape[1])
        up_slot = "edge"
    else:
        raise ValueError("unknown reducer %r" % (rho,))
    return _edge_grads(g, phi, X, Y, W, up, up_slot, needs)


def gsddmm_backward(g, phi, X=None, Y=None, W=None, M=None, dM=None,
                    needs=("x", "y", "w")):
    """Operand gradients of gsddmm(g, phi). M accepted for symmetry."""
    return _edge_grads(g, phi, X, Y, W, dM, "edge", needs)


# ---------------------------------------------------------------------------
# taped kernel ops


def gspmm(g, phi, rho, X=None, Y=None, W=None, **kernel_kw):
    """Taped gspmm. Returns the reduced matrix (a Var when any operand is)."""
    xv, yv, wv = _value(X), _value(Y), _value(W)
    Z, aux = kernels.gspmm(g, phi, rho, X=xv, Y=yv, W=wv, **kernel_kw)
    tape = _tape_of(X, Y, W)
    if tape is None:
        return Z
    needs = tuple(n for n, v in (("x", X), ("y", Y), ("w", W)) if isinstance(v, Var))

    def back(up, ctx):
        b = gspmm_backward(ctx["g"], ctx["phi"], ctx["rho"], X=ctx["x"],
                           Y=ctx["y"], W=ctx["w"], aux=ctx["aux"], dZ=up,
                           needs=ctx["needs"])
        return [b.dx, b.dy, b.dw]

    ctx = {"g": g, "phi": phi, "rho": rho, "x": xv, "y": yv, "w": wv,
           "aux": aux, "needs": needs}
    return tape.record("gspmm", (_var_or(X), _var_or(Y), _var_or(W)), Z, ctx, back)


def gsddmm(g, phi, X=None, Y=None, W=None, **kernel_kw):
    """Taped gsddmm. Returns the per-edge matrix (a Var when any operand is)."""
    xv, yv, wv = _value(X), _value(Y), _value(W)
    M = kernels.gsddmm(g, phi, X=xv, Y=yv, W=wv, **kernel_kw)
    tape = _tape_of(X, Y, W)
    if tape is None:
        return M
    needs = tuple(n for n, v in (("x", X), ("y", Y), ("w", W)) if isinstance(v, Var))

    def back(up, ctx):
        b = gsddmm_backward(ctx["g"], ctx["phi"], X=ctx["x"], Y=ctx["y"],
                            W=ctx["w"], dM=up, needs=ctx["needs"])
        return [b.dx, b.dy, b.dw]

    ctx = {"g": g, "phi": phi, "x": xv, "y": yv, "w": wv, "needs": needs}
    return tape.record("gsddmm", (_var_or(X), _var_or(Y), _var_or(W)), M, ctx, back)


# ---------------------------------------------------------------------------
# numeric verification


def grad_check(f, arrays, h=1e-6, clamp=1e-8):
    """Max relative error between taped gradients of f and central differences.

    f maps one Var per input array to a scalar Var; it is also evaluated on
    plain arrays for the finite-difference probes. arrays are perturbed in
    place and restored.
    """
    tape = Tape()
    hvars = [tape.leaf(a) for a in arrays]
    loss = f(*hvars)
    grads = tape.backward(loss)
    worst = 0.0
    for var, arr in zip(hvars, arrays):
        analytic = grads[var]
        if arr.size == 0:
            continue
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = arr[idx]
            arr[idx] = keep + h
            lp = float(np.asarray(_value(f(*arrays))).ravel()[0])
            arr[idx] = keep - h
            lm = float(np.asarray(_value(f(*arrays))).ravel()[0])
            arr[idx] = keep
            numeric = (lp - lm) / (2.0 * h)
            a = float(analytic[idx if analytic.ndim == arr.ndim else idx[0]])
            denom = max(abs(a), abs(numeric), clamp)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
