import numpy as np
import pytest

import graphmp as G
from graphmp import autodiff, kernels, layers
from conftest import random_graph, rel_err


def _dense_mean_agg(g, x):
    n = g.num_nodes
    a = np.zeros((n, n))
    su, de, _ = g.coo()
    for u, v in zip(su, de):
        a[u, v] += 1.0
    agg = a.T @ x
    deg = a.sum(axis=0)
    nz = deg > 0
    agg[nz] /= deg[nz, None]
    return agg


def test_gcn_identity_weights_is_mean_agg():
    rng = np.random.default_rng(0)
    g = random_graph(rng, max_nodes=20, max_edges=60, min_nodes=4)
    x = rng.standard_normal((g.num_nodes, 3))
    p = G.layers.GCNParams(W=np.eye(3), b=np.zeros((1, 3)))
    h = G.gcn_layer(g, x, p, act="linear")
    assert rel_err(h, _dense_mean_agg(g, x)) < 1e-12


def test_gcn_zero_indegree_rows_see_only_bias():
    g = G.build_graph(3, [(0, 2), (2, 0)])  # node 1 isolated
    x = np.ones((3, 2))
    b = np.array([[5.0, -1.0]])
    p = G.layers.GCNParams(W=np.eye(2), b=b)
    h = G.gcn_layer(g, x, p, act="linear")
    assert h[1].tolist() == [5.0, -1.0]


def test_gcn_two_layer_dense_oracle():
    rng = np.random.default_rng(1)
    g = random_graph(rng, max_nodes=25, max_edges=80, min_nodes=5)
    x = rng.standard_normal((g.num_nodes, 4))
    p1 = G.layers.init_gcn(rng, 4, 6)
    p2 = G.layers.init_gcn(rng, 6, 2)
    p1.b[:] = rng.standard_normal((1, 6))
    h = G.gcn_layer(g, x, p1, act="relu")
    h = G.gcn_layer(g, h, p2, act="linear")
    want = np.maximum(_dense_mean_agg(g, x) @ p1.W + p1.b, 0.0)
    want = _dense_mean_agg(g, want) @ p2.W + p2.b
    assert rel_err(h, want) < 1e-12


def test_gcn_rejects_wrong_rows(g3):
    p = G.layers.init_gcn(np.random.default_rng(0), 2, 2)
    with pytest.raises(ValueError):
        G.gcn_layer(g3, np.ones((4, 2)), p)


def test_sage_reduces_to_either_branch():
    rng = np.random.default_rng(2)
    g = random_graph(rng, max_nodes=15, max_edges=40, min_nodes=3)
    x = rng.standard_normal((g.num_nodes, 3))
    w = rng.standard_normal((3, 2))
    zero = np.zeros((3, 2))
    own_only = G.sage_layer(g, x, G.layers.SAGEParams(w, zero), act="linear")
    assert rel_err(own_only, x @ w) < 1e-15
    neigh_only = G.sage_layer(g, x, G.layers.SAGEParams(zero, w), act="linear")
    assert rel_err(neigh_only, _dense_mean_agg(g, x) @ w) < 1e-12


def test_sage_dense_oracle_with_relu():
    rng = np.random.default_rng(3)
    g = random_graph(rng, max_nodes=18, max_edges=50, min_nodes=4)
    x = rng.standard_normal((g.num_nodes, 3))
    p = G.layers.init_sage(rng, 3, 4)
    h = G.sage_layer(g, x, p)
    want = np.maximum(x @ p.W_self + _dense_mean_agg(g, x) @ p.W_neigh, 0.0)
    assert rel_err(h, want) < 1e-12


def test_gat_zero_attention_is_mean_of_projections():
    rng = np.random.default_rng(4)
    g = random_graph(rng, max_nodes=15, max_edges=45, min_nodes=3)
    x = rng.standard_normal((g.num_nodes, 3))
    w = rng.standard_normal((3, 2))
    head = G.layers.GATHead(W=w, a_l=np.zeros((2, 1)), a_r=np.zeros((2, 1)))
    h = G.gat_layer(g, x, G.layers.GATParams([head]))
    assert rel_err(h, _dense_mean_agg(g, x @ w)) < 1e-12


def test_gat_single_inedge_passes_projection_through():
    g = G.chain(4)  # each non-root node has exactly one in-edge
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 3))
    p = G.layers.init_gat(rng, 3, 2, num_heads=1)
    h = G.gat_layer(g, x, p)
    proj = x @ p.heads[0].W
    for v in (1, 2, 3):
        assert rel_err(h[v], proj[v - 1]) < 1e-12
    assert not h[0].any()


def test_gat_multihead_concat():
    rng = np.random.default_rng(6)
    g = random_graph(rng, max_nodes=12, max_edges=40, min_nodes=3)
    x = rng.standard_normal((g.num_nodes, 3))
    p = G.layers.init_gat(rng, 3, 2, num_heads=3)
    h = G.gat_layer(g, x, p)
    assert h.shape == (g.num_nodes, 6)
    for i in range(3):
        solo = G.gat_layer(g, x, G.layers.GATParams([p.heads[i]]))
        assert np.array_equal(h[:, 2 * i:2 * i + 2], solo)
    two = G.gat_layer(g, x, p, num_heads=2)
    assert two.shape == (g.num_nodes, 4)
    with pytest.raises(ValueError, match="head count"):
        G.gat_layer(g, x, p, num_heads=0)


def test_layer_gradients_fd():
    rng = np.random.default_rng(7)
    g = random_graph(rng, max_nodes=16, max_edges=48, min_nodes=6)
    n = g.num_nodes
    x = rng.standard_normal((n, 3))
    labels = rng.integers(0, 2, size=n)

    def gcn_f(xv, wv, bv):
        h = G.gcn_layer(g, xv, G.layers.GCNParams(wv, bv), act="relu")
        return autodiff.xent_loss(h, labels)

    w = rng.standard_normal((3, 2))
    b = rng.standard_normal((1, 2))
    assert G.grad_check(gcn_f, [x, w, b]) < 1e-5

    def sage_f(xv, wsv, wnv):
        h = G.sage_layer(g, xv, G.layers.SAGEParams(wsv, wnv), act="relu")
        return autodiff.xent_loss(h, labels)

    assert G.grad_check(sage_f, [x, w, rng.standard_normal((3, 2))]) < 1e-5

    def gat_f(xv, wv, alv, arv):
        p = G.layers.GATParams([G.layers.GATHead(wv, alv, arv)])
        h = G.gat_layer(g, xv, p)
        return autodiff.xent_loss(h, labels)

    args = [x, w, rng.standard_normal((2, 1)), rng.standard_normal((2, 1))]
    assert G.grad_check(gat_f, args) < 1e-5


def test_xavier_uniform_bounds_and_determinism():
    limit = G.layers.RELU_GAIN * np.sqrt(6.0 / (30 + 50))
    w = G.xavier_uniform(np.random.default_rng(0), 30, 50)
    assert w.shape == (30, 50)
    assert np.abs(w).max() <= limit
    assert np.abs(w).max() > 0.8 * limit  # actually fills the range
    w2 = G.xavier_uniform(np.random.default_rng(0), 30, 50)
    assert np.array_equal(w, w2)
    w3 = G.xavier_uniform(np.random.default_rng(1), 30, 50)
    assert not np.array_equal(w, w3)
    unit = G.xavier_uniform(np.random.default_rng(0), 30, 50, gain=1.0)
    assert np.abs(unit).max() <= limit / G.layers.RELU_GAIN


def test_model_shape_validation():
    with pytest.raises(ValueError):
        G.GCNModel([8])
    m = G.GCNModel([8, 4, 2])
    assert len(m.parameters()) == 4
    assert m.parameters()[0].shape == (8, 4)
    assert m.parameters()[3].shape == (1, 2)


def test_train_config_validation():
    with pytest.raises(ValueError):
        G.TrainConfig(lr=-0.1)
    with pytest.raises(ValueError):
        G.TrainConfig(epochs=0)


def test_train_zero_lr_keeps_parameters():
    rng = np.random.default_rng(8)
    g = random_graph(rng, max_nodes=12, max_edges=30, min_nodes=6)
    x = rng.standard_normal((g.num_nodes, 3))
    labels = rng.integers(0, 2, size=g.num_nodes)
    model = G.GCNModel([3, 2], seed=0)
    before = [p.copy() for p in model.parameters()]
    losses = G.train(g, x, labels, model, G.TrainConfig(lr=0.0, epochs=4))
    assert len(losses) == 4
    assert max(losses) - min(losses) == 0.0
    for p, q in zip(model.parameters(), before):
        assert np.array_equal(p, q)


def test_train_updates_in_place_and_learns():
    rng = np.random.default_rng(9)
    g = G.chain(12)
    x = rng.standard_normal((12, 4))
    labels = rng.integers(0, 2, size=12)
    model = G.GCNModel([4, 2], seed=1)
    params = model.parameters()
    ids = [id(p) for p in params]
    losses = G.train(g, x, labels, model, G.TrainConfig(lr=0.2, epochs=40))
    assert [id(p) for p in model.parameters()] == ids
    assert losses[-1] < losses[0]


def test_train_is_deterministic_bitwise():
    rng = np.random.default_rng(10)
    g = random_graph(rng, max_nodes=14, max_edges=40, min_nodes=6)
    x = rng.standard_normal((g.num_nodes, 3))
    labels = rng.integers(0, 3, size=g.num_nodes)
    runs = []
    for _ in range(2):
        model = G.GCNModel([3, 3], seed=7)
        cfg = G.TrainConfig(lr=0.1, epochs=10, strategy="serial_reference")
        losses = G.train(g, x, labels, model, cfg)
        runs.append((losses, [p.copy() for p in model.parameters()]))
    assert runs[0][0] == runs[1][0]
    for a, b in zip(runs[0][1], runs[1][1]):
        assert np.array_equal(a, b)


def test_train_rejects_bad_labels():
    g = G.chain(4)
    model = G.GCNModel([2, 2])
    with pytest.raises(ValueError, match=r"label out of range"):
        G.train(g, np.ones((4, 2)), np.array([0, 1, 2, 0]), model,
                G.TrainConfig(epochs=1))
    with pytest.raises(ValueError, match=r"label out of range"):
        G.train(g, np.ones((4, 2)), np.array([0, -1, 1, 0]), model,
                G.TrainConfig(epochs=1))


def test_karate_club_dataset():
    g, feats, labels = G.karate_club()
    assert g.num_nodes == 34 and g.num_edges == 156
    su, de, _ = g.coo()
    pairs = set(zip(su.tolist(), de.tolist()))
    assert all((v, u) in pairs for u, v in pairs)  # both directions present
    assert feats.shape == (34, 18)
    assert np.array_equal(feats.sum(axis=1), np.ones(34))  # one-hot rows
    degs = g.in_degrees(np.arange(34))
    assert np.array_equal(feats.argmax(axis=1), degs)  # column = degree
    assert labels.shape == (34,) and set(labels.tolist()) == {0, 1}
    assert labels.sum() == 17


def test_karate_mini_training_run():
    g, feats, labels = G.karate_club()
    model = G.GCNModel([18, 8, 2], seed=0)
    losses = G.train(g, feats, labels, model, G.TrainConfig(lr=0.2, epochs=30))
    assert all(b < a for a, b in zip(losses[:10], losses[1:11]))
    assert losses[-1] < losses[0]
