"""File formats: edge-list text, binary graph/feature containers, loss CSV.

Text edge lists hold one ``u<TAB>v`` pair per line with 0-based decimal ids;
``#`` starts a comment and an optional ``nodes=N`` header pins the node count
(otherwise max id + 1 is inferred).

Binary graphs: magic ``GRF1``, little-endian u64 num_nodes and num_edges,
then the src and dst arrays as u32 little-endian.

Dense features travel as headerless CSV (one row per node/edge id) or as
binary: magic ``FMX1``, u64 rows, u64 cols, f64 little-endian row-major data.
"""

import csv
import struct

import numpy as np

from .features import as_feature_matrix
from .graph import Graph, from_arrays

_GRAPH_MAGIC = b"GRF1"
_MATRIX_MAGIC = b"FMX1"


def read_edge_list(path):
    src, dst = [], []
    num_nodes = None
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("nodes="):
                num_nodes = int(line[len("nodes="):])
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError("%s:%d: expected 'u<TAB>v', got %r"
                                 % (path, lineno, raw.rstrip()))
            src.append(int(parts[0]))
            dst.append(int(parts[1]))
    src = np.asarray(src, dtype=np.uint32)
    dst = np.asarray(dst, dtype=np.uint32)
    if num_nodes is None:
        return from_arrays(src, dst)
    return Graph(src, dst, num_nodes)


def write_edge_list(path, g, header=True):
    with open(path, "w") as f:
        if header:
            f.write("nodes=%d\n" % g.num_nodes)
        for u, v in zip(g.src.tolist(), g.dst.tolist()):
            f.write("%d\t%d\n" % (u, v))


def read_graph_binary(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _GRAPH_MAGIC:
            raise ValueError("%s: bad magic %r, expected %r" % (path, magic, _GRAPH_MAGIC))
        n, m = struct.unpack("<QQ", f.read(16))
        src = np.frombuffer(f.read(4 * m), dtype="<u4")
        dst = np.frombuffer(f.read(4 * m), dtype="<u4")
        if src.size != m or dst.size != m:
            raise ValueError("%s: truncated edge arrays" % path)
    return Graph(src.astype(np.uint32), dst.astype(np.uint32), n)


def write_graph_binary(path, g):
    with open(path, "wb") as f:
        f.write(_GRAPH_MAGIC)
        f.write(struct.pack("<QQ", g.num_nodes, g.num_edges))
        f.write(g.src.astype("<u4").tobytes())
        f.write(g.dst.astype("<u4").tobytes())


def read_features_csv(path):
    rows = []
    with open(path) as f:
        for row in csv.reader(f):
            if row:
                rows.append([float(x) for x in row])
    return as_feature_matrix(np.asarray(rows, dtype=np.float64))


def write_features_csv(path, matrix):
    matrix = as_feature_matrix(matrix)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for row in matrix:
            w.writerow([repr(float(x)) for x in row])


def read_features_binary(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MATRIX_MAGIC:
            raise ValueError("%s: bad magic %r, expected %r" % (path, magic, _MATRIX_MAGIC))
        rows, cols = struct.unpack("<QQ", f.read(16))
        data = np.frombuffer(f.read(8 * rows * cols), dtype="<f8")
        if data.size != rows * cols:
            raise ValueError("%s: truncated matrix data" % path)
    return data.reshape(rows, cols).astype(np.float64)


def write_features_binary(path, matrix):
    matrix = as_feature_matrix(matrix)
    with open(path, "wb") as f:
        f.write(_MATRIX_MAGIC)
        f.write(struct.pack("<QQ", matrix.shape[0], matrix.shape[1]))
        f.write(matrix.astype("<f8").tobytes())


def write_loss_curve(path, losses):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(losses):
            w.writerow([i, repr(float(loss))])


def read_loss_curve(path):
    losses = []
    with open(path) as f:
        r = csv.reader(f)
        next(r)  # header
        for row in r:
            if row:
                losses.append(float(row[1]))
    return losses
