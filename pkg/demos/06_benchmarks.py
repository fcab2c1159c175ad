#!/usr/bin/env python3
"""Run the three benchmark studies at demo scale and digest the CSVs.

The same studies are available from the command line:

    python3 -m graphmp.bench kernels --graph power_law:n=10000,deg=20 \
        --feats 1,2,4,8,16,32,64,128 --heads 8 --out kernels.csv
    python3 -m graphmp.bench memory --sizes 1000,5000,20000 --feats 64
    python3 -m graphmp.bench overhead --sizes 100,1000,10000,100000

Every timed cell is validated against serial_reference before the clock
starts; a disagreement aborts with exit code 2. Skipped strategy/format
combinations stay in the CSV with empty measurement columns, so the grid
shape is always the same.
"""

import csv

from graphmp import bench, generators


def rows_of(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def main():
    spec = generators.parse_graph_spec("power_law:n=3000,deg=20")
    report = bench.bench_kernels(spec, feat_sizes=[4, 32], heads=4, repeats=5)
    report.write("demo_kernels.csv")
    timed = [r for r in report.rows if r["repeats"]]
    print("kernels grid: %d cells, %d timed" % (len(report.rows), len(timed)))
    for r in timed:
        if r["format"] != "csc" or r["feat_size"] != 32:
            continue
        print("  %-6s %-18s d=%s  %.3es  %.2f gflops"
              % (r["kernel"], r["strategy"], r["feat_size"],
                 float(r["median_seconds"]), float(r["gflops"])))

    report = bench.bench_memory([1000, 4000], feat_size=32, avg_degree=10)
    report.write("demo_memory.csv")
    print("attention forward+backward, peak auxiliary bytes:")
    for r in report.rows:
        print("  n=%-5d %-12s %12d" % (r["num_nodes"], r["kernel"],
                                       r["peak_aux_bytes"]))

    report = bench.bench_overhead([100, 1000, 10000], feat_size=16)
    report.write("demo_overhead.csv")
    print("one training epoch on a chain (fixed cost amortizes):")
    for r in report.rows:
        per_node = float(r["median_seconds"]) / r["num_nodes"]
        print("  n=%-6d %.3es total, %.1fns per node"
              % (r["num_nodes"], float(r["median_seconds"]), per_node * 1e9))


if __name__ == "__main__":
    main()
