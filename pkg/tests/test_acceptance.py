"""End-to-end acceptance gate.

Eight independent checks covering the package's core guarantees: kernel
correctness against brute-force oracles, gradient correctness against finite
differences, strategy equivalence, the fusion memory bound, edge softmax and
attention, the degree-bucketed catch-all, end-to-end training, and the
benchmark harness. Each check prints one PASS line (run with -s or -rA to see
them); a failure shows up as a normal pytest failure. Checks with a stated
time budget assert it.
"""

import csv
import time

import numpy as np

import graphmp as G
from graphmp import autodiff, bench, kernels, layers
from conftest import all_builtin_pairs, edge_messages, operands_for, \
    random_graph, rel_err

RHOS = ("sum", "max", "min", "mean")


def _report(num, ok, detail):
    line = "criterion %d: %s - %s" % (num, "PASS" if ok else "FAIL", detail)
    print(line)
    assert ok, line


def _probe_loss(z, u, v):
    return autodiff.matmul(autodiff.matmul(u, z), v)


def _edge_loop_reduce(g, msgs):
    """Single brute-force pass: sum/count plus per-column extrema with the
    smallest-edge-id tie rule, iterating edges in ascending id order."""
    n, d = g.num_nodes, msgs.shape[1]
    su, de, eid = g.coo()
    sums = np.zeros((n, d))
    counts = np.zeros(n, dtype=np.int64)
    mx = np.zeros((n, d))
    mn = np.zeros((n, d))
    amx = np.full((n, d), -1, dtype=np.int64)
    amn = np.full((n, d), -1, dtype=np.int64)
    for k in np.argsort(eid, kind="stable"):
        v, e = int(de[k]), int(eid[k])
        row = msgs[e]
        sums[v] += row
        counts[v] += 1
        for j in range(d):
            if amx[v, j] < 0 or row[j] > mx[v, j]:
                mx[v, j], amx[v, j] = row[j], e
            if amn[v, j] < 0 or row[j] < mn[v, j]:
                mn[v, j], amn[v, j] = row[j], e
    mean = sums.copy()
    nz = counts > 0
    mean[nz] /= counts[nz, None]
    return {"sum": (sums, None), "mean": (mean, counts),
            "max": (mx, amx), "min": (mn, amn)}


def test_criterion_1_dense_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1000)
    phis = kernels.builtin_message_funcs()
    checked = 0
    for i in range(200):
        g = random_graph(rng, max_nodes=64, max_edges=512, min_nodes=1)
        for phi in phis:
            ops = operands_for(rng, g, phi, d=2, positive=phi.op == "div")
            msgs = edge_messages(g, phi, **ops)
            want = _edge_loop_reduce(g, msgs)
            got_m = G.gsddmm(g, phi, **ops)
            assert rel_err(got_m, msgs) < 1e-12
            for rho in RHOS:
                z, aux = G.gspmm(g, phi, rho, **ops)
                wz, waux = want[rho]
                if rho in ("sum", "mean"):
                    assert rel_err(z, wz) < 1e-12, (i, phi.describe(), rho)
                else:
                    assert np.array_equal(z, wz), (i, phi.describe(), rho)
                    assert np.array_equal(aux.arg_edge, waux), \
                        (i, phi.describe(), rho)
                checked += 1
    dt = time.perf_counter() - t0
    _report(1, dt < 60.0,
            "fused kernels match the brute-force edge loop on 200 graphs "
            "x %d combinations (%.1fs, budget 60s)" % (checked // 200, dt))


def test_criterion_2_gradient_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2000)
    pairs, phis = all_builtin_pairs()
    worst = 0.0
    for phi, rho in pairs:
        g = random_graph(rng, max_nodes=32, max_edges=80, min_nodes=3)
        slots = [s for s, t in (("X", "src"), ("Y", "dst"), ("W", "edge"))
                 if t in phi.targets]
        ops = operands_for(rng, g, phi, d=2, positive=phi.op == "div")
        z, _ = G.gspmm(g, phi, rho, **ops)
        u = rng.standard_normal((1, g.num_nodes))
        v = rng.standard_normal((z.shape[1], 1))

        def f(*vals):
            out = autodiff.gspmm(g, phi, rho, **dict(zip(slots, vals)))
            return _probe_loss(out, u, v)

        err = G.grad_check(f, [ops[s] for s in slots])
        worst = max(worst, err)
        assert err < 1e-5, (phi.describe(), rho, err)
    for phi in phis:
        g = random_graph(rng, max_nodes=32, max_edges=80, min_nodes=3)
        slots = [s for s, t in (("X", "src"), ("Y", "dst"), ("W", "edge"))
                 if t in phi.targets]
        ops = operands_for(rng, g, phi, d=2, positive=phi.op == "div")
        m = G.gsddmm(g, phi, **ops)
        u = rng.standard_normal((1, g.num_edges))
        v = rng.standard_normal((m.shape[1], 1))

        def f(*vals):
            out = autodiff.gsddmm(g, phi, **dict(zip(slots, vals)))
            return _probe_loss(out, u, v)

        err = G.grad_check(f, [ops[s] for s in slots])
        worst = max(worst, err)
        assert err < 1e-5, (phi.describe(), err)

    # every backward stays inside the two-kernel class, and source gradients
    # run as an aggregation over the reverse graph
    g = random_graph(rng, max_nodes=24, max_edges=60, min_nodes=4)
    rev = G.reverse(g)
    for phi, rho in pairs:
        ops = operands_for(rng, g, phi, d=2, positive=phi.op == "div")
        z, aux = G.gspmm(g, phi, rho, **ops)
        dz = rng.standard_normal(z.shape)
        with G.capture_dispatch() as log:
            G.gspmm_backward(g, phi, rho, **ops, aux=aux, dZ=dz)
        assert {r.kernel for r in log} <= {"gspmm", "gsddmm"}
        if "src" in phi.targets:
            assert any(r.kernel == "gspmm" and r.graph_id == rev.uid
                       for r in log), (phi.describe(), rho)
    dt = time.perf_counter() - t0
    _report(2, dt < 120.0,
            "all %d backward passes within 1e-5 of central differences "
            "(worst %.2e), closed kernel class, source grads on the reverse "
            "graph (%.1fs, budget 120s)" % (len(pairs) + len(phis), worst, dt))


def test_criterion_3_strategy_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3000)
    phis = kernels.builtin_message_funcs()
    strategies = ("node_parallel", "edge_parallel", "feature_parallel")
    cases = 0
    for i in range(50):
        g = random_graph(rng, max_nodes=64, max_edges=512, min_nodes=2)
        phi = phis[i % len(phis)]
        ops = operands_for(rng, g, phi, d=3, positive=phi.op == "div")
        for rho in RHOS:
            ref, ref_aux = G.gspmm(g, phi, rho, **ops,
                                   strategy="serial_reference")
            for strat in strategies:
                for workers in (1, 2, 8):
                    z, aux = G.gspmm(g, phi, rho, **ops, strategy=strat,
                                     num_workers=workers)
                    if rho in ("sum", "mean"):
                        assert rel_err(z, ref) < 1e-9, (i, strat, rho)
                    else:
                        assert np.array_equal(z, ref), (i, strat, rho)
                        assert np.array_equal(aux.arg_edge,
                                              ref_aux.arg_edge), \
                            (i, strat, rho)
                    cases += 1
        ref_m = G.gsddmm(g, phi, **ops, strategy="serial_reference")
        for strat in strategies:
            for workers in (1, 2, 8):
                m = G.gsddmm(g, phi, **ops, strategy=strat,
                             num_workers=workers)
                assert rel_err(m, ref_m) < 1e-9
                cases += 1
    dt = time.perf_counter() - t0
    _report(3, dt < 120.0,
            "%d strategy/worker runs match serial_reference (%.1fs, "
            "budget 120s)" % (cases, dt))


def test_criterion_4_fusion_memory_bound():
    t0 = time.perf_counter()
    report = bench.bench_memory([1000, 5000, 20000], feat_size=64,
                                avg_degree=20)
    peaks = {(r["kernel"], r["num_nodes"]): r["peak_aux_bytes"]
             for r in report.rows}
    d = 64
    ratios = {}
    for n in (1000, 5000, 20000):
        m = next(r["num_edges"] for r in report.rows if r["num_nodes"] == n)
        fused = peaks[("fused_gat", n)]
        unfused = peaks[("unfused_gat", n)]
        ratios[n] = unfused / fused
        # the fused path never holds an |E| x d array; the baseline must
        assert fused < m * d * 8, (n, fused, m * d * 8)
        assert unfused > m * d * 8, (n, unfused, m * d * 8)
    dt = time.perf_counter() - t0
    _report(4, ratios[20000] > 3.0 and dt < 180.0,
            "unfused/fused peak-byte ratio at n=20000 is %.1fx (> 3x); "
            "fused stays under one per-edge feature matrix at every size "
            "(%.1fs, budget 180s)" % (ratios[20000], dt))


def test_criterion_5_edge_softmax_and_gat():
    rng = np.random.default_rng(5000)
    for _ in range(20):
        g = random_graph(rng, max_nodes=48, max_edges=256, min_nodes=2)
        scores = rng.standard_normal((g.num_edges, 1)) * 20
        alpha = G.edge_softmax(g, scores)
        sums, _ = G.gspmm(g, kernels.copy_rhs("edge"), "sum", W=alpha)
        counts = g.in_degrees(np.arange(g.num_nodes))
        assert np.abs(sums[counts > 0] - 1.0).max() < 1e-12
        assert not sums[counts == 0].any()

    g = random_graph(rng, max_nodes=16, max_edges=48, min_nodes=8)
    x = rng.standard_normal((g.num_nodes, 3))
    labels = rng.integers(0, 2, size=g.num_nodes)
    p = layers.init_gat(rng, 3, 2, num_heads=2)

    def f(xv, w0, al0, ar0, w1, al1, ar1):
        params = layers.GATParams([layers.GATHead(w0, al0, ar0),
                                   layers.GATHead(w1, al1, ar1)])
        h = G.gat_layer(g, xv, params)
        return autodiff.xent_loss(h, labels)

    arrays = [x]
    for hp in p.heads:
        arrays += [hp.W, hp.a_l, hp.a_r]
    err = G.grad_check(f, arrays)
    _report(5, err < 1e-5,
            "per-destination attention sums are 1 within 1e-12 on 20 graphs; "
            "two-head attention layer grad check %.2e < 1e-5" % err)


def test_criterion_6_udf_bucketing():
    rng = np.random.default_rng(6000)
    pairs, _ = all_builtin_pairs()
    reducers = {"sum": lambda b: b.sum(axis=1),
                "mean": lambda b: b.mean(axis=1),
                "max": lambda b: b.max(axis=1),
                "min": lambda b: b.min(axis=1)}

    def udf_message(phi):
        def msgf(ctx):
            rows = {"src": ctx.src_rows, "dst": ctx.dst_rows,
                    "edge": ctx.edge_rows}
            if phi.op == "copy_lhs":
                return rows[phi.lhs_target]
            if phi.op == "copy_rhs":
                return rows[phi.rhs_target]
            a, b = rows[phi.lhs_target], rows[phi.rhs_target]
            if phi.op == "dot":
                return (a * b).sum(axis=1, keepdims=True)
            return {"add": a + b, "sub": a - b, "mul": a * b,
                    "div": a / b}[phi.op]
        return msgf

    for gi in range(5):
        g = random_graph(rng, max_nodes=40, max_edges=200, min_nodes=2)
        for phi, rho in pairs:
            ops = operands_for(rng, g, phi, d=2, positive=phi.op == "div")
            z_udf = G.update_all_udf(g, udf_message(phi), reducers[rho],
                                     src_feat=ops.get("X"),
                                     dst_feat=ops.get("Y"),
                                     edge_feat=ops.get("W"))
            want, _ = G.gspmm(g, phi, rho, **ops)
            assert rel_err(z_udf, want) < 1e-12, (gi, phi.describe(), rho)

    for _ in range(100):
        g = random_graph(rng, max_nodes=50, max_edges=250, min_nodes=1)
        counts = g.in_degrees(np.arange(g.num_nodes))
        shapes = []

        def reducer(block):
            shapes.append(block.shape)
            return block.sum(axis=1)

        G.update_all_udf(g, lambda c: c.src_rows, reducer,
                         src_feat=np.ones((g.num_nodes, 1)))
        degs = sorted(k for k in np.unique(counts) if k > 0)
        assert [s[1] for s in shapes] == degs
        assert sum(s[0] for s in shapes) == int((counts > 0).sum())
        for shape, k in zip(shapes, degs):
            assert shape[0] == int((counts == k).sum())
    _report(6, True,
            "user-function path equals the fused kernels for all %d "
            "built-in pairs on 5 graphs; bucket partitions are exact on "
            "100 graphs" % len(pairs))


def test_criterion_7_end_to_end_training():
    t0 = time.perf_counter()
    g, feats, labels = G.karate_club()
    model = G.GCNModel([18, 8, 2], seed=0)
    losses = G.train(g, feats, labels, model,
                     G.TrainConfig(lr=0.05, epochs=1500, seed=0))
    dt = time.perf_counter() - t0
    first20 = all(b < a for a, b in zip(losses[:20], losses[1:21]))
    ratio = losses[-1] / losses[0]
    _report(7, first20 and ratio < 0.5 and dt < 10.0,
            "two-layer network on the club graph: loss strictly decreases "
            "for 20 epochs, final/initial = %.3f < 0.5 (%.1fs, budget 10s)"
            % (ratio, dt))


def test_criterion_8_bench_harness(tmp_path):
    sizes = [1, 2, 4, 8, 16, 32, 64, 128]
    gspmm_ok = {("node_parallel", "csc"), ("edge_parallel", "csc"),
                ("feature_parallel", "csc")}
    gsddmm_ok = {("node_parallel", "csr"), ("node_parallel", "csc"),
                 ("edge_parallel", "coo"), ("edge_parallel", "csr"),
                 ("edge_parallel", "csc"), ("feature_parallel", "coo"),
                 ("feature_parallel", "csr"), ("feature_parallel", "csc")}
    crossover_lines = []
    for name, spec_text in (("power_law", "power_law:n=10000,deg=20"),
                            ("constant_indegree",
                             "constant_indegree:n=10000,k=32")):
        out = tmp_path / ("%s.csv" % name)
        code = bench.main(["kernels", "--graph", spec_text,
                           "--feats", ",".join(map(str, sizes)),
                           "--heads", "8", "--repeats", "5",
                           "--out", str(out)])
        assert code == 0  # no correctness abort: every timed cell pre-checked
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 2 * 3 * 3 * len(sizes)  # the complete grid
        for r in rows:
            allowed = gspmm_ok if r["kernel"] == "gspmm" else gsddmm_ok
            if (r["strategy"], r["format"]) in allowed:
                assert r["repeats"] == "5" and float(r["median_seconds"]) > 0
                assert float(r["gflops"]) > 0
            else:
                assert r["repeats"] == "0" and r["median_seconds"] == ""
        # the hardware-dependent claim is reported, not asserted: per-edge
        # scoring, edge parallel on COO vs node parallel on CSR
        for d in sizes:
            pick = {(r["strategy"], r["format"]): float(r["median_seconds"])
                    for r in rows
                    if r["kernel"] == "gsddmm" and int(r["feat_size"]) == d
                    and r["repeats"] == "5"}
            ep, np_ = pick[("edge_parallel", "coo")], pick[("node_parallel",
                                                            "csr")]
            crossover_lines.append(
                "  %s d=%3d: ep/coo %.3es vs np/csr %.3es -> %s"
                % (name, d, ep, np_, "ep/coo" if ep < np_ else "np/csr"))
    print("gsddmm strategy comparison (informational):")
    for line in crossover_lines:
        print(line)
    _report(8, True,
            "both 10k-node graphs produce the complete %d-row grid with "
            "every timed cell passing the 1e-9 pre-check" % (2 * 3 * 3
                                                             * len(sizes)))
