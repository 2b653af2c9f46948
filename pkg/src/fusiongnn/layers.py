"""Aggregation layers (GCN, GAT, SAGE, GIN) and the MLP pre/post-process blocks.

Layers take node features as an ``(n, d_in)`` Value and return ``(n, d_out)``.
No activation is applied on the way out; the framework applies it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionError, UsageError
from .graph import Graph

AGGREGATIONS = ("GCN", "GAT", "SAGE", "GIN")
LAYER_KINDS = AGGREGATIONS + ("MLP",)


def glorot(rng, fan_in, fan_out, name=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return T.parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)), name=name)


def zeros(shape, name=None):
    return T.parameter(np.zeros(shape), name=name)


@dataclass
class LayerParams:
    kind: str
    in_dim: int
    out_dim: int
    weights: dict = field(default_factory=dict)
    act: str = "relu"  # hidden activation for 2-layer MLP / GIN
    heads: int = 1

    def parameters(self):
        return [self.weights[k] for k in sorted(self.weights)]

    def __getitem__(self, key):
        return self.weights[key]


def init_layer(kind, in_dim, out_dim, rng, *, layers=2, act="relu", heads=1) -> LayerParams:
    """Glorot-uniform weights, zero biases, GIN epsilon starting at 0."""
    if kind not in LAYER_KINDS:
        raise UsageError(f"unknown layer kind '{kind}'")
    w = {}
    if kind == "GCN":
        w["W"] = glorot(rng, in_dim, out_dim, "gcn.W")
    elif kind == "GAT":
        for h in range(heads):
            sfx = "" if heads == 1 else f"{h}"
            w["W" + sfx] = glorot(rng, in_dim, out_dim, "gat.W")
            w["a_src" + sfx] = glorot(rng, out_dim, 1, "gat.a_src")
            w["a_dst" + sfx] = glorot(rng, out_dim, 1, "gat.a_dst")
    elif kind == "SAGE":
        w["W_self"] = glorot(rng, in_dim, out_dim, "sage.W_self")
        w["W_neigh"] = glorot(rng, in_dim, out_dim, "sage.W_neigh")
    elif kind == "GIN":
        w["eps"] = zeros((1, 1), "gin.eps")
        w["W1"] = glorot(rng, in_dim, out_dim, "gin.W1")
        w["b1"] = zeros((1, out_dim), "gin.b1")
        w["W2"] = glorot(rng, out_dim, out_dim, "gin.W2")
        w["b2"] = zeros((1, out_dim), "gin.b2")
    else:
        return init_mlp(in_dim, out_dim, rng, layers=layers, act=act)
    return LayerParams(kind, in_dim, out_dim, w, act, heads)


def init_mlp(in_dim, out_dim, rng, *, hidden=None, layers=2, act="relu") -> LayerParams:
    if layers == 1:
        w = {"W1": glorot(rng, in_dim, out_dim, "mlp.W1"), "b1": zeros((1, out_dim), "mlp.b1")}
        return LayerParams("MLP", in_dim, out_dim, w, act)
    hidden = hidden or out_dim
    w = {
        "W1": glorot(rng, in_dim, hidden, "mlp.W1"),
        "b1": zeros((1, hidden), "mlp.b1"),
        "W2": glorot(rng, hidden, out_dim, "mlp.W2"),
        "b2": zeros((1, out_dim), "mlp.b2"),
    }
    return LayerParams("MLP", in_dim, out_dim, w, act)


def _check(p: LayerParams, kind: str, H: T.Value):
    if p.kind != kind:
        raise UsageError(f"expected {kind} parameters, got {p.kind}")
    if H.shape[1] != p.in_dim:
        raise DimensionError(f"{kind}: input width {H.shape[1]} != in_dim {p.in_dim}")


def gcn_forward(p: LayerParams, H: T.Value, a_norm) -> T.Value:
    _check(p, "GCN", H)
    if a_norm.n != H.shape[0]:
        raise DimensionError(f"GCN: adjacency {a_norm.shape} for {H.shape[0]} nodes")
    return T.spmm(a_norm, T.matmul(H, p["W"]))


def _gat_head(W, a_src, a_dst, H, pattern):
    wh = T.matmul(H, W)
    scores = T.edge_scores(pattern, T.matmul(wh, a_src), T.matmul(wh, a_dst))
    att = T.edge_softmax(pattern, T.leaky_relu(scores, 0.2))
    return T.edge_spmm(pattern, att, wh)


def gat_attention(p: LayerParams, H: T.Value, g: Graph, head=0):
    """Attention coefficients of one head, aligned with ``g.adjacency('selfloop-raw')``."""
    pattern = g.adjacency("selfloop-raw")
    sfx = "" if p.heads == 1 else f"{head}"
    wh = T.matmul(H, p["W" + sfx])
    scores = T.edge_scores(pattern, T.matmul(wh, p["a_src" + sfx]), T.matmul(wh, p["a_dst" + sfx]))
    return T.edge_softmax(pattern, T.leaky_relu(scores, 0.2)).data[:, 0], pattern


def gat_forward(p: LayerParams, H: T.Value, g: Graph) -> T.Value:
    """Single-head attention over N(u) and u itself; several heads are averaged."""
    _check(p, "GAT", H)
    pattern = g.adjacency("selfloop-raw")
    if pattern.n != H.shape[0]:
        raise DimensionError(f"GAT: graph has {pattern.n} nodes, features {H.shape[0]}")
    if p.heads == 1:
        return _gat_head(p["W"], p["a_src"], p["a_dst"], H, pattern)
    outs = [_gat_head(p[f"W{h}"], p[f"a_src{h}"], p[f"a_dst{h}"], H, pattern) for h in range(p.heads)]
    return T.reduce_mean(outs)


def sage_forward(p: LayerParams, H: T.Value, g: Graph) -> T.Value:
    _check(p, "SAGE", H)
    mean_adj = g.adjacency("mean")
    if mean_adj.n != H.shape[0]:
        raise DimensionError(f"SAGE: graph has {mean_adj.n} nodes, features {H.shape[0]}")
    return T.add(T.matmul(H, p["W_self"]), T.spmm(mean_adj, T.matmul(H, p["W_neigh"])))


def gin_forward(p: LayerParams, H: T.Value, g: Graph) -> T.Value:
    _check(p, "GIN", H)
    raw = g.adjacency("raw")
    if raw.n != H.shape[0]:
        raise DimensionError(f"GIN: graph has {raw.n} nodes, features {H.shape[0]}")
    combined = T.add(T.mul(T.add(p["eps"], 1.0), H), T.spmm(raw, H))
    hidden = T.activation(T.add(T.matmul(combined, p["W1"]), p["b1"]), p.act)
    return T.add(T.matmul(hidden, p["W2"]), p["b2"])


def mlp_forward(p: LayerParams, H: T.Value) -> T.Value:
    """``act(H W1 + b1) W2 + b2``, or ``H W1 + b1`` for a one-layer block."""
    _check(p, "MLP", H)
    out = T.add(T.matmul(H, p["W1"]), p["b1"])
    if "W2" not in p.weights:
        return out
    return T.add(T.matmul(T.activation(out, p.act), p["W2"]), p["b2"])


def aggregate(p: LayerParams, H: T.Value, g: Graph) -> T.Value:
    if p.kind == "GCN":
        return gcn_forward(p, H, g.adjacency("sym-selfloop"))
    if p.kind == "GAT":
        return gat_forward(p, H, g)
    if p.kind == "SAGE":
        return sage_forward(p, H, g)
    if p.kind == "GIN":
        return gin_forward(p, H, g)
    raise UsageError(f"'{p.kind}' is not an aggregation")
