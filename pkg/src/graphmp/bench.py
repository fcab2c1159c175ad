"""Benchmark harness: kernel throughput, memory scaling, API overhead.

Three studies, each emitting rows of one fixed CSV schema
(see COLUMNS; measurement columns are left empty on skipped rows):

  kernels   the attention pair - weighted-sum reduction (phi mul(src,edge),
            rho sum) and per-edge dot scoring - across strategy x format x
            feature size. Each timed cell runs `heads` per-head calls.
  memory    fused vs unfused attention aggregation, forward+backward, peak
            auxiliary bytes from the allocation hook per run.
  overhead  one GCN layer forward+backward on chain graphs of growing size;
            fixed dispatch cost amortizes as size grows.

Flop formulas (documented so numbers compare across machines): both timed
kernels count 2 * num_edges * feat_size flops per head; the overhead study
counts only its aggregation kernel the same way. gflops is that count times
heads, divided by the median cell time, in units of 1e9.

Every timed configuration is checked against serial_reference first; any
mismatch beyond 1e-9 relative aborts the study (exit code 2 from the CLI).
Graph construction and format conversion happen before timing starts.
"""

import argparse
import csv
import statistics
import sys
import time

import numpy as np

from . import accounting
from . import autodiff
from . import kernels
from .generators import chain, generate, parse_graph_spec
from .layers import GCNModel, TrainConfig, train
from .messaging import edge_softmax

COLUMNS = ("kernel", "phi", "rho", "strategy", "format", "num_nodes",
           "num_edges", "feat_size", "heads", "repeats", "median_seconds",
           "gflops", "peak_aux_bytes")

STRATEGY_ALIASES = {
    "np": "node_parallel",
    "ep": "edge_parallel",
    "epa": "edge_parallel_atomic",
    "fp": "feature_parallel",
    "serial": "serial_reference",
}


class CorrectnessAbort(RuntimeError):
    """A timed configuration disagreed with serial_reference."""


class BenchReport:
    """Accumulated rows plus the CSV writer for the fixed schema."""

    def __init__(self):
        self.rows = []

    def add(self, **kw):
        self.rows.append({c: kw.get(c, "") for c in COLUMNS})

    def write(self, path):
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=COLUMNS)
            w.writeheader()
            w.writerows(self.rows)


def _rel_err(got, want):
    scale = max(1.0, float(np.abs(want).max()) if want.size else 1.0)
    return float(np.abs(got - want).max()) / scale if got.size else 0.0


def _time_cell(fn, heads, repeats):
    fn()  # warm-up, excluded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(heads):
            fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _peak_of(fn):
    with accounting.track_allocations() as meter:
        fn()
    if meter.peak_bytes == 0:
        raise RuntimeError("allocation hook recorded nothing; accounting is required")
    return meter.peak_bytes


def bench_kernels(spec, feat_sizes, heads=8, strategies=None, formats=None,
                  repeats=5, num_workers=None, seed=0):
    """Throughput grid for the attention kernel pair on one graph."""
    if repeats < 5:
        raise ValueError("repeats must be >= 5 (median of at least 5)")
    g = generate(spec)
    g.to_csr()
    g.to_csc()  # both orientations built outside the timed region
    n, m = g.num_nodes, g.num_edges
    rng = np.random.default_rng(seed)
    strategies = strategies or ("node_parallel", "edge_parallel", "feature_parallel")
    formats = formats or ("csr", "csc", "coo")
    report = BenchReport()

    for d in feat_sizes:
        X = rng.standard_normal((n, d))
        Y = rng.standard_normal((n, d))
        W = rng.standard_normal((m, 1))
        spmm_phi = kernels.mul("src", "edge")
        sddmm_phi = kernels.dot("src", "dst")
        ref_z, _ = kernels.gspmm(g, spmm_phi, "sum", X=X, W=W,
                                 strategy="serial_reference")
        ref_m = kernels.gsddmm(g, sddmm_phi, X=X, Y=Y,
                               strategy="serial_reference")
        cells = [("gspmm", spmm_phi, "sum", ref_z,
                  lambda s, f: kernels.gspmm(g, spmm_phi, "sum", X=X, W=W,
                                             strategy=s, fmt=f,
                                             num_workers=num_workers)[0]),
                 ("gsddmm", sddmm_phi, "", ref_m,
                  lambda s, f: kernels.gsddmm(g, sddmm_phi, X=X, Y=Y,
                                              strategy=s, fmt=f,
                                              num_workers=num_workers))]
        for kern, phi, rho, ref, call in cells:
            for strat in strategies:
                for fmt in formats:
                    base = dict(kernel=kern, phi=phi.describe(), rho=rho,
                                strategy=strat, format=fmt, num_nodes=n,
                                num_edges=m, feat_size=d, heads=heads)
                    try:
                        got = call(strat, fmt)
                    except ValueError:
                        report.add(repeats=0, **base)
                        continue
                    err = _rel_err(got, ref)
                    if err > 1e-9:
                        raise CorrectnessAbort(
                            "%s %s/%s/%s d=%d disagrees with serial_reference "
                            "(rel err %.3e)" % (kern, phi.describe(), strat,
                                                fmt, d, err))
                    med = _time_cell(lambda: call(strat, fmt), heads, repeats)
                    flops = 2.0 * m * d * heads
                    peak = _peak_of(lambda: call(strat, fmt))
                    report.add(repeats=repeats, median_seconds=repr(med),
                               gflops=repr(flops / med / 1e9),
                               peak_aux_bytes=peak, **base)
    return report


def _attention_forward_backward(g, X, alpha0, fused):
    """One attention-weighted aggregation, taped, plus its backward pass.

    The fused path is a single gspmm. The unfused twin materializes the
    gathered source rows and the weighted messages per edge (the scatter-
    gather formulation), with matching per-edge temporaries in backward.
    """
    tape = autodiff.Tape()
    xv = tape.leaf(X)
    av = tape.leaf(alpha0)
    alpha = edge_softmax(g, av)
    if fused:
        z = autodiff.gspmm(g, kernels.mul("src", "edge"), "sum", X=xv, W=alpha)
    else:
        z = _scatter_gather_aggregate(g, xv, alpha)
    loss = autodiff.xent_loss(z, np.zeros(g.num_nodes, dtype=np.int64))
    tape.backward(loss)


def _scatter_gather_aggregate(g, X, alpha):
    """Unfused baseline: gather source rows, weight per edge, scatter-add."""
    su, de, _ = g.coo()
    su64, de64 = su.astype(np.int64), de.astype(np.int64)
    xv, av = X.value, alpha.value
    gathered = accounting.register(xv[su64])
    weighted = accounting.register(gathered * av)
    out = accounting.register(np.zeros((g.num_nodes, xv.shape[1])))
    np.add.at(out, de64, weighted)

    def back(up, ctx):
        d_weighted = accounting.register(up[de64])
        d_alpha = accounting.register(
            (d_weighted * gathered).sum(axis=1, keepdims=True))
        d_gathered = accounting.register(d_weighted * av)
        dx = accounting.register(np.zeros_like(xv))
        np.add.at(dx, su64, d_gathered)
        return [dx, d_alpha]

    tape = X.tape if isinstance(X, autodiff.Var) else alpha.tape
    return tape.record("scatter_gather", [X, alpha], out, None, back)


def bench_memory(sizes, feat_size=64, avg_degree=20, models=("fused_gat",
                 "unfused_gat"), cap_bytes=None, seed=0):
    """Peak auxiliary bytes of fused vs unfused attention, per graph size."""
    if list(sizes) != sorted(sizes):
        raise ValueError("graph sizes must be ascending")
    report = BenchReport()
    for n in sizes:
        g = generate(parse_graph_spec(
            "power_law:n=%d,deg=%d,seed=%d" % (n, avg_degree, seed)))
        g.to_csr()
        g.to_csc()
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((g.num_nodes, feat_size))
        alpha0 = rng.standard_normal((g.num_edges, 1))
        for model in models:
            fused = model == "fused_gat"
            base = dict(kernel=model, phi="mul(src,edge)", rho="sum",
                        strategy="node_parallel", format="csc",
                        num_nodes=g.num_nodes, num_edges=g.num_edges,
                        feat_size=feat_size, heads=1, repeats=1)
            try:
                with accounting.track_allocations(cap_bytes=cap_bytes) as meter:
                    _attention_forward_backward(g, X, alpha0, fused)
                if meter.peak_bytes == 0:
                    raise RuntimeError("allocation hook recorded nothing; "
                                       "accounting is required")
                report.add(peak_aux_bytes=meter.peak_bytes, **base)
            except accounting.MemoryCapExceeded:
                report.add(peak_aux_bytes="cap_exceeded", **base)
    return report


def bench_overhead(sizes, feat_size=16, repeats=5, seed=0):
    """Per-size timing of one GCN layer forward+backward on a chain graph."""
    report = BenchReport()
    for n in sizes:
        g = chain(n)
        g.to_csc()
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, feat_size))
        labels = rng.integers(0, 2, size=n)
        model = GCNModel([feat_size, 2], seed=seed)

        def epoch():
            train(g, x, labels, model, TrainConfig(lr=0.0, epochs=1))

        epoch()  # warm-up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            epoch()
            times.append(time.perf_counter() - t0)
        med = statistics.median(times)
        flops = 2.0 * g.num_edges * feat_size
        report.add(kernel="gcn_epoch", phi="copy_lhs(src)", rho="mean",
                   strategy="node_parallel", format="csc", num_nodes=n,
                   num_edges=g.num_edges, feat_size=feat_size, heads=1,
                   repeats=repeats, median_seconds=repr(med),
                   gflops=repr(flops / med / 1e9), peak_aux_bytes="")
    return report


def _parse_int_list(text):
    return [int(t) for t in text.split(",") if t]


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="bench", description="Kernel, memory, and overhead benchmarks.")
    sub = parser.add_subparsers(dest="study", required=True)

    def common(p):
        p.add_argument("--graph", default="power_law:n=10000,deg=20")
        p.add_argument("--feats", default="32")
        p.add_argument("--repeats", type=int, default=5)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default="report.csv")
        p.add_argument("--seed", type=int, default=0)

    pk = sub.add_parser("kernels", help="strategy x format x size throughput")
    common(pk)
    pk.add_argument("--heads", type=int, default=8)
    pk.add_argument("--strategies", default="np,ep,fp")
    pk.add_argument("--formats", default="csr,csc,coo")

    pm = sub.add_parser("memory", help="fused vs unfused peak bytes")
    common(pm)
    pm.add_argument("--sizes", default="1000,5000,20000")
    pm.add_argument("--mem-cap", type=int, default=None)

    po = sub.add_parser("overhead", help="per-size epoch time on chains")
    common(po)
    po.add_argument("--sizes", default="100,1000,10000,100000")

    args = parser.parse_args(argv)
    try:
        if args.study == "kernels":
            spec = parse_graph_spec(args.graph, seed=args.seed)
            strategies = tuple(STRATEGY_ALIASES.get(s, s)
                               for s in args.strategies.split(",") if s)
            formats = tuple(f for f in args.formats.split(",") if f)
            report = bench_kernels(spec, _parse_int_list(args.feats),
                                   heads=args.heads, strategies=strategies,
                                   formats=formats, repeats=args.repeats,
                                   num_workers=args.threads, seed=args.seed)
        elif args.study == "memory":
            feats = _parse_int_list(args.feats)
            report = bench_memory(_parse_int_list(args.sizes),
                                  feat_size=feats[0], cap_bytes=args.mem_cap,
                                  seed=args.seed)
        else:
            report = bench_overhead(_parse_int_list(args.sizes),
                                    repeats=args.repeats, seed=args.seed)
    except CorrectnessAbort as exc:
        print("correctness check failed: %s" % exc, file=sys.stderr)
        return 2
    report.write(args.out)
    print("wrote %d rows to %s" % (len(report.rows), args.out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
