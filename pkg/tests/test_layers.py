import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fusiongnn import tensor as T
from fusiongnn.errors import DimensionError, UsageError
from fusiongnn.graph import Graph
from fusiongnn.layers import (aggregate, gat_attention, gcn_forward, init_layer, init_mlp,
                              mlp_forward)
from helpers import edge_list, random_graph


def weights(p):
    return {k: v.data for k, v in p.weights.items()}


def run(p, H, g):
    return aggregate(p, T.constant(H), g).data


def set_weights(p, **values):
    for k, v in values.items():
        p.weights[k].data[...] = v


def edgeless(n, d=2):
    return Graph(n, np.zeros((0, 2)), np.ones((n, d)), [0] * n, 1)


def test_init_shapes():
    rng = np.random.default_rng(0)
    shapes = {k: v.shape for k, v in init_layer("GAT", 3, 5, rng).weights.items()}
    assert shapes == {"W": (3, 5), "a_src": (5, 1), "a_dst": (5, 1)}
    gin = init_layer("GIN", 3, 5, rng)
    assert gin["eps"].data[0, 0] == 0.0 and gin["b1"].data.sum() == 0.0
    with pytest.raises(UsageError):
        init_layer("CHEB", 3, 3, rng)


def test_gcn_two_nodes():
    g = Graph(2, [(0, 1)], np.eye(2), [0, 0], 1)
    p = init_layer("GCN", 2, 2, np.random.default_rng(0))
    set_weights(p, W=np.eye(2))
    assert np.allclose(run(p, np.eye(2), g), 0.5)


def test_gcn_edgeless_is_identity():
    p = init_layer("GCN", 2, 2, np.random.default_rng(0))
    set_weights(p, W=np.eye(2))
    H = np.random.default_rng(1).normal(size=(4, 2))
    assert np.allclose(run(p, H, edgeless(4)), H)


def test_gcn_regular_graph_keeps_ones():
    ring = Graph(6, [(i, (i + 1) % 6) for i in range(6)], np.ones((6, 1)), [0] * 6, 1)
    p = init_layer("GCN", 1, 1, np.random.default_rng(0))
    set_weights(p, W=np.eye(1))
    assert np.allclose(run(p, np.ones((6, 1)), ring), 1.0, atol=1e-10)


def test_gat_zero_attention_is_mean():
    g = random_graph(6, 3)
    p = init_layer("GAT", 4, 3, np.random.default_rng(0))
    set_weights(p, a_src=0.0, a_dst=0.0)
    wh = g.features @ p["W"].data
    a = oracles.dense_adj(g.n, edge_list(g)) + np.eye(g.n)
    assert np.allclose(run(p, g.features, g), (a @ wh) / a.sum(axis=1, keepdims=True))


def test_gat_isolated_node_self_attention():
    g = Graph(3, [(0, 1)], np.ones((3, 2)), [0] * 3, 1)
    p = init_layer("GAT", 2, 2, np.random.default_rng(0))
    H = np.random.default_rng(1).normal(size=(3, 2))
    assert np.allclose(run(p, H, g)[2], H[2] @ p["W"].data)


def test_gat_attention_rows_sum_to_one():
    g = random_graph(8, 2)
    p = init_layer("GAT", 4, 3, np.random.default_rng(0))
    att, pattern = gat_attention(p, T.constant(g.features), g)
    sums = np.bincount(pattern.rows, weights=att, minlength=g.n)
    assert np.allclose(sums, 1.0, atol=1e-12)


def test_sage_isolated_and_identity():
    g = Graph(3, [(0, 1)], np.ones((3, 2)), [0] * 3, 1)
    p = init_layer("SAGE", 2, 2, np.random.default_rng(0))
    H = np.random.default_rng(1).normal(size=(3, 2))
    assert np.allclose(run(p, H, g)[2], H[2] @ p["W_self"].data)
    set_weights(p, W_self=np.eye(2), W_neigh=0.0)
    assert np.allclose(run(p, H, g), H)


def test_gin_edgeless_and_neighbor_sum():
    g = random_graph(5, 0, features=2)
    p = init_layer("GIN", 2, 2, np.random.default_rng(0), act="none")
    set_weights(p, W1=np.eye(2), W2=np.eye(2))
    H = np.random.default_rng(1).normal(size=(5, 2))
    assert np.allclose(run(p, H, edgeless(5)), H)
    set_weights(p, eps=-1.0)
    assert np.allclose(run(p, H, g), oracles.dense_adj(5, edge_list(g)) @ H)


@pytest.mark.parametrize("kind", ["GCN", "GAT", "SAGE", "GIN"])
@pytest.mark.parametrize("seed", range(5))
def test_layers_match_dense_oracles(kind, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(6, seed, p=0.4, features=3)
    p = init_layer(kind, 3, 4, rng)
    for w in p.parameters():
        w.data[...] = rng.normal(size=w.shape)
    want = oracles.aggregate(kind, g.n, edge_list(g), g.features, weights(p))
    assert np.max(np.abs(run(p, g.features, g) - want)) < 1e-10


@pytest.mark.parametrize("kind", ["GCN", "GAT", "SAGE", "GIN"])
@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=15, deadline=None)
def test_permutation_equivariance(kind, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(7, seed, p=0.35, features=3)
    p = init_layer(kind, 3, 3, rng)
    perm = rng.permutation(g.n)
    h = g.permuted(perm)
    assert np.allclose(run(p, h.features, h), run(p, g.features, g)[perm], atol=1e-10)


def test_mlp_examples():
    rng = np.random.default_rng(0)
    p = init_mlp(3, 3, rng, hidden=3)
    H = np.abs(rng.normal(size=(4, 3)))
    set_weights(p, W1=np.eye(3), W2=np.eye(3))
    assert np.allclose(mlp_forward(p, T.constant(H)).data, H)
    set_weights(p, W1=0.0, W2=0.0, b2=[[1.0, 2.0, 3.0]])
    assert np.allclose(mlp_forward(p, T.constant(H)).data, [[1, 2, 3]] * 4)
    q = init_mlp(3, 2, rng, hidden=5, act="elu")
    for w in q.parameters():
        w.data[...] = rng.normal(size=w.shape)
    w = weights(q)
    want = oracles.mlp(H, w["W1"], w["b1"], w["W2"], w["b2"], "elu")
    assert np.max(np.abs(mlp_forward(q, T.constant(H)).data - want)) < 1e-12
    one = init_mlp(3, 2, rng, layers=1)
    assert set(one.weights) == {"W1", "b1"}


def test_dimension_errors():
    g = random_graph(5, 0, features=3)
    p = init_layer("SAGE", 4, 2, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        aggregate(p, T.constant(g.features), g)
    q = init_layer("GCN", 3, 2, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        gcn_forward(q, T.constant(np.ones((4, 3))), g.adjacency("sym-selfloop"))
