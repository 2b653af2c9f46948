"""The six fusion operations applied to a list of equally-shaped node features.

``slots`` names the predecessor level of each input. Only CONCAT looks at it:
its projection has one ``d x d`` row block per level, so concatenating the
surviving inputs and projecting with their row blocks equals concatenating
every level (dropped ones as zeros) with the full projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionError, UsageError
from .layers import glorot, zeros
from .topology import FUSIONS


@dataclass
class FusionParams:
    op: str
    dim: int
    slots: int
    weights: dict = field(default_factory=dict)

    def parameters(self):
        return [self.weights[k] for k in sorted(self.weights)]


def init_fusion(op, dim, slots, rng) -> FusionParams:
    if op not in FUSIONS:
        raise UsageError(f"unknown fusion '{op}'")
    w = {}
    if op == "CONCAT":
        w["P"] = glorot(rng, slots * dim, dim, "concat.P")
    elif op == "LSTM":
        w["Wx"] = glorot(rng, dim, 4 * dim, "lstm.Wx")
        w["Wh"] = glorot(rng, dim, 4 * dim, "lstm.Wh")
        w["b"] = zeros((1, 4 * dim), "lstm.b")
    elif op == "ATT":
        w["a"] = glorot(rng, dim, 1, "att.a")
    return FusionParams(op, dim, slots, w)


def _lstm(p: FusionParams, inputs):
    d = p.dim
    Wx, Wh, b = p.weights["Wx"], p.weights["Wh"], p.weights["b"]
    h = c = None
    for x in inputs:
        gates = T.add(T.matmul(x, Wx), b)
        if h is not None:
            gates = T.add(gates, T.matmul(h, Wh))
        i = T.sigmoid(T.slice_cols(gates, 0, d))
        f = T.sigmoid(T.slice_cols(gates, d, 2 * d))
        g = T.tanh(T.slice_cols(gates, 2 * d, 3 * d))
        o = T.sigmoid(T.slice_cols(gates, 3 * d, 4 * d))
        c = T.mul(i, g) if c is None else T.add(T.mul(f, c), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
    return h


def attention_weights(p: FusionParams, inputs) -> T.Value:
    """Per-node softmax over inputs of the shared linear score; shape ``(n, k)``."""
    scores = T.concat_cols([T.matmul(x, p.weights["a"]) for x in inputs])
    return T.softmax_rows(scores)


def _att(p: FusionParams, inputs):
    w = attention_weights(p, inputs)
    terms = [T.mul(T.slice_cols(w, j, j + 1), x) for j, x in enumerate(inputs)]
    return T.reduce_sum(terms)


def _concat(p: FusionParams, inputs, slots):
    P = p.weights["P"]
    if list(slots) != list(range(p.slots)):
        if max(slots) >= p.slots:
            raise DimensionError(f"CONCAT: slot {max(slots)} beyond {p.slots} projection blocks")
        rows = np.concatenate([np.arange(s * p.dim, (s + 1) * p.dim) for s in slots])
        P = T.take_rows(P, rows)
    return T.matmul(T.concat_cols(inputs), P)


def fuse(op, params: FusionParams | None, inputs, slots=None) -> T.Value:
    if not inputs:
        raise UsageError(f"{op}: fusion of an empty input list")
    shape = inputs[0].shape
    for x in inputs[1:]:
        if x.shape != shape:
            raise DimensionError(f"{op}: input shapes {shape} and {x.shape} differ")
    if params is not None and params.op != op:
        raise UsageError(f"{op}: got parameters for {params.op}")
    if op == "SUM":
        return T.reduce_sum(inputs)
    if op == "MEAN":
        return T.reduce_mean(inputs)
    if op == "MAX":
        return T.reduce_max(inputs)
    if params is None or shape[1] != params.dim:
        raise DimensionError(f"{op}: parameters for width {getattr(params, 'dim', None)}, inputs {shape}")
    if op == "CONCAT":
        return _concat(params, inputs, range(len(inputs)) if slots is None else slots)
    if op == "LSTM":
        return _lstm(params, inputs)
    if op == "ATT":
        return _att(params, inputs)
    raise UsageError(f"unknown fusion '{op}'")
