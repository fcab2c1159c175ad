"""graphmp: fused sparse message-passing kernels with reverse-mode autodiff.

The package is organized around two kernels. gspmm reduces per-edge messages
into one row per destination node; gsddmm emits one row per edge. Messages
come from a small closed set of per-edge combinations of source, destination,
and edge features. Everything above - named-feature message passing, edge
softmax, GNN layers, training - composes those two calls, and every gradient
is itself one of the two kernels, so the fused memory behavior carries
through backward passes.

Submodules: graph (structure, formats, sampling), kernels (the two fused
kernels and their execution strategies), autodiff (tape, dense ops, kernel
backward rules), messaging (update_all / apply_edges / edge_softmax / UDF
bucketing), layers (GCN / SAGE / GAT and a trainer), generators (synthetic
graphs), accounting (allocation metering and dispatch logging), graphio
(edge-list, binary, and CSV formats), bench (CLI benchmark harness).
"""

from .accounting import (AllocationMeter, MemoryCapExceeded, capture_dispatch,
                         track_allocations)
from .autodiff import (Tape, Var, grad_check, gsddmm_backward, gspmm_backward)
from .features import FeatureDict, as_feature_matrix, slice_rows
from .generators import (GenSpec, chain, constant_indegree, erdos_renyi,
                         generate, power_law)
from .graph import (Adjacency, Graph, Subgraph, build_graph, from_arrays,
                    neighbor_sample, reverse)
from .kernels import (ArgExtrema, MessageFunc, builtin_message_funcs,
                      force_strategy, gsddmm, gspmm, select_format)
from .layers import (GCNModel, TrainConfig, gat_layer, gcn_layer, karate_club,
                     sage_layer, train, xavier_uniform)
from .messaging import (UDFContext, apply_edges, dst, edge, edge_softmax, msg,
                        src, update_all, update_all_udf)

__version__ = "0.1.0"

__all__ = [
    "Adjacency", "AllocationMeter", "ArgExtrema", "FeatureDict", "GCNModel",
    "GenSpec", "Graph", "MemoryCapExceeded", "MessageFunc", "Subgraph",
    "Tape", "TrainConfig", "UDFContext", "Var", "apply_edges",
    "as_feature_matrix", "build_graph", "builtin_message_funcs",
    "capture_dispatch", "chain", "constant_indegree", "dst", "edge",
    "edge_softmax", "erdos_renyi", "force_strategy", "from_arrays",
    "gat_layer", "gcn_layer", "generate", "grad_check", "gsddmm",
    "gsddmm_backward", "gspmm", "gspmm_backward", "karate_club", "msg",
    "neighbor_sample", "power_law", "reverse", "sage_layer", "select_format",
    "slice_rows", "src", "track_allocations", "train", "update_all",
    "update_all_udf", "xavier_uniform",
]
