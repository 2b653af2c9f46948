"""Define-by-run reverse-mode differentiation over 2-D float64 arrays.

Every op returns a :class:`Value` that remembers its parents and a closure
mapping the output adjoint to parent adjoints. :func:`backward` walks the graph
in reverse topological order. The tape is rebuilt on every forward pass.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, NonFiniteError, UsageError
from .sparse import SparseMatrix

_ids = itertools.count()


class Value:
    __slots__ = ("id", "data", "grad", "parents", "_backward", "op", "requires_grad", "name")

    def __init__(self, data, parents: tuple = (), backward: Callable | None = None,
                 op: str = "leaf", requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Value holds 2-D data, got ndim={arr.ndim}")
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite output from op '{op}'")
        self.id = next(_ids)
        self.data = arr
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.op = op
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Value{label}(shape={self.shape}, op={self.op})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name=None) -> Value:
    return Value(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Value:
    return data if isinstance(data, Value) else Value(data)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True).reshape(shape)


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --- linear algebra -------------------------------------------------------

def matmul(a: Value, b: Value) -> Value:
    a, b = constant(a), constant(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} x {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return Value(a.data @ b.data, (a, b), bw, "matmul")


def spmm(a: SparseMatrix, b: Value) -> Value:
    b = constant(b)
    if a.n != b.shape[0]:
        raise DimensionError(f"spmm: sparse {a.shape} x dense {b.shape}")

    def bw(g):
        return (a.rmatmul_t(g),)

    return Value(a.matmul(b.data), (b,), bw, "spmm")


def edge_spmm(pattern: SparseMatrix, weights: Value, x: Value) -> Value:
    """Sparse product whose nonzero values are a differentiable ``(nnz, 1)`` Value."""
    weights, x = constant(weights), constant(x)
    if weights.shape != (pattern.nnz, 1):
        raise DimensionError(f"edge_spmm: weights {weights.shape} for nnz={pattern.nnz}")
    if x.shape[0] != pattern.n:
        raise DimensionError(f"edge_spmm: sparse {pattern.shape} x dense {x.shape}")
    w = weights.data[:, 0]

    def bw(g):
        g = np.ascontiguousarray(g)
        gw = kernels.sddmm(pattern.indptr, pattern.cols, g, np.ascontiguousarray(x.data))
        return gw[:, None], pattern.rmatmul_t(g, w)

    return Value(pattern.matmul(x.data, w), (weights, x), bw, "edge_spmm")


def edge_scores(pattern: SparseMatrix, src: Value, dst: Value) -> Value:
    """Per-entry ``src[row] + dst[col]`` as an ``(nnz, 1)`` Value."""
    src, dst = constant(src), constant(dst)
    if src.shape != (pattern.n, 1) or dst.shape != (pattern.n, 1):
        raise DimensionError("edge_scores: src/dst must be (n, 1)")
    rows, cols = pattern.rows, pattern.cols

    def bw(g):
        g = g[:, 0]
        gs = np.bincount(rows, weights=g, minlength=pattern.n)[:, None]
        gd = np.bincount(cols, weights=g, minlength=pattern.n)[:, None]
        return gs, gd

    return Value(src.data[rows] + dst.data[cols], (src, dst), bw, "edge_scores")


def edge_softmax(pattern: SparseMatrix, scores: Value) -> Value:
    """Softmax of ``(nnz, 1)`` scores within each row of ``pattern``."""
    scores = constant(scores)
    if scores.shape != (pattern.nnz, 1):
        raise DimensionError("edge_softmax: scores must be (nnz, 1)")
    a = kernels.segment_softmax(pattern.indptr, np.ascontiguousarray(scores.data[:, 0]))
    rows = pattern.rows

    def bw(g):
        g = g[:, 0]
        inner = kernels.segment_sum(pattern.indptr, np.ascontiguousarray(a * g))
        return ((a * (g - inner[rows]))[:, None],)

    return Value(a[:, None], (scores,), bw, "edge_softmax")


# --- elementwise ----------------------------------------------------------

def add(a, b) -> Value:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Value(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Value:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return Value(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Value:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Value(a.data * b.data, (a, b), bw, "mul")


def scale(a: Value, k: float) -> Value:
    a = constant(a)
    k = float(k)
    return Value(a.data * k, (a,), lambda g: (g * k,), "scale")


def relu(a: Value) -> Value:
    mask = a.data > 0
    return Value(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def elu(a: Value) -> Value:
    neg = a.data <= 0
    e = np.exp(np.minimum(a.data, 0.0))
    out = np.where(neg, e - 1.0, a.data)
    return Value(out, (a,), lambda g: (g * np.where(neg, e, 1.0),), "elu")


def leaky_relu(a: Value, slope: float = 0.2) -> Value:
    pos = a.data > 0
    out = np.where(pos, a.data, slope * a.data)
    return Value(out, (a,), lambda g: (g * np.where(pos, 1.0, slope),), "leaky_relu")


def activation(a: Value, kind: str) -> Value:
    if kind == "relu":
        return relu(a)
    if kind == "elu":
        return elu(a)
    if kind in ("none", "identity"):
        return a
    raise UsageError(f"unknown activation '{kind}'")


def exp(a: Value) -> Value:
    with np.errstate(over="ignore"):  # overflow surfaces as NonFiniteError
        out = np.exp(a.data)
    return Value(out, (a,), lambda g: (g * out,), "exp")


def log(a: Value) -> Value:
    if (a.data <= 0).any():
        raise NonFiniteError("log of non-positive value")
    return Value(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sigmoid(a: Value) -> Value:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Value(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Value) -> Value:
    out = np.tanh(a.data)
    return Value(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def dropout(a: Value, rate: float, rng: np.random.Generator | None) -> Value:
    if rate <= 0.0 or rng is None:
        return a
    if rate >= 1.0:
        raise UsageError("dropout rate must be < 1")
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return Value(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


# --- reductions over lists of equally-shaped tensors ----------------------

def _check_same(values: Sequence[Value], op):
    if not values:
        raise UsageError(f"{op}: empty input list")
    shape = values[0].shape
    for v in values[1:]:
        if v.shape != shape:
            raise DimensionError(f"{op}: shapes {shape} and {v.shape} differ")


def reduce_sum(values: Sequence[Value]) -> Value:
    values = [constant(v) for v in values]
    _check_same(values, "reduce_sum")
    out = values[0].data.copy()
    for v in values[1:]:
        out = out + v.data
    return Value(out, tuple(values), lambda g: tuple(g for _ in values), "reduce_sum")


def reduce_mean(values: Sequence[Value]) -> Value:
    values = [constant(v) for v in values]
    _check_same(values, "reduce_mean")
    k = len(values)
    out = values[0].data.copy()
    for v in values[1:]:
        out = out + v.data
    return Value(out / k, tuple(values), lambda g: tuple(g / k for _ in values), "reduce_mean")


def reduce_max(values: Sequence[Value]) -> Value:
    """Elementwise maximum; ties send the gradient to the earliest input."""
    values = [constant(v) for v in values]
    _check_same(values, "reduce_max")
    stacked = np.stack([v.data for v in values])
    arg = stacked.argmax(axis=0)

    def bw(g):
        return tuple(np.where(arg == i, g, 0.0) for i in range(len(values)))

    return Value(stacked.max(axis=0), tuple(values), bw, "reduce_max")


def concat_cols(values: Sequence[Value]) -> Value:
    values = [constant(v) for v in values]
    if not values:
        raise UsageError("concat_cols: empty input list")
    rows = values[0].shape[0]
    for v in values:
        if v.shape[0] != rows:
            raise DimensionError(f"concat_cols: row counts {rows} and {v.shape[0]} differ")
    bounds = np.cumsum([0] + [v.shape[1] for v in values])

    def bw(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(values)))

    return Value(np.concatenate([v.data for v in values], axis=1), tuple(values), bw, "concat_cols")


def slice_cols(a: Value, start: int, stop: int) -> Value:
    if not 0 <= start <= stop <= a.shape[1]:
        raise DimensionError(f"slice_cols: [{start}:{stop}] of {a.shape}")

    def bw(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        return (full,)

    return Value(a.data[:, start:stop], (a,), bw, "slice_cols")


def take_rows(a: Value, index) -> Value:
    index = np.asarray(index, dtype=np.int64)

    def bw(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return Value(a.data[index], (a,), bw, "take_rows")


def total(a: Value) -> Value:
    """Sum of all entries as a 1x1 Value."""
    return Value(a.data.sum(), (a,), lambda g: (np.full(a.shape, g[0, 0]),), "sum")


def mean_all(a: Value) -> Value:
    n = a.data.size
    return Value(a.data.mean(), (a,), lambda g: (np.full(a.shape, g[0, 0] / n),), "mean")


# --- softmax & losses -----------------------------------------------------

def _softmax(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(x: Value) -> Value:
    s = _softmax(x.data)

    def bw(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return Value(s, (x,), bw, "softmax_rows")


def log_softmax_rows(x: Value) -> Value:
    z = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bw(g):
        return (g - s * g.sum(axis=1, keepdims=True),)

    return Value(out, (x,), bw, "log_softmax_rows")


def cross_entropy(logits: Value, labels, mask) -> Value:
    """Mean negative log-likelihood over the nodes selected by ``mask``."""
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.flatnonzero(np.asarray(mask)) if np.asarray(mask).dtype == bool else np.asarray(mask, dtype=np.int64)
    if len(idx) == 0:
        raise UsageError("cross_entropy: empty mask")
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"cross_entropy: {len(labels)} labels for {n} rows")
    if labels.min() < 0 or labels.max() >= c:
        raise UsageError(f"cross_entropy: labels must lie in [0, {c})")
    lsm = log_softmax_rows(logits)
    picked = lsm.data[idx, labels[idx]]
    m = len(idx)

    def bw(g):
        full = np.zeros(lsm.shape)
        full[idx, labels[idx]] = -g[0, 0] / m
        return (full,)

    return Value(-picked.mean(), (lsm,), bw, "cross_entropy")


# --- backward -------------------------------------------------------------

def _topo_order(root: Value):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for p in node.parents:
            if p.id not in seen:
                stack.append((p, False))
    return order


def backward(loss: Value, params: Iterable[Value] = ()) -> dict[int, np.ndarray]:
    """Populate ``.grad`` on every Value reachable from ``loss``.

    Returns a map from Value id to gradient. Members of ``params`` that are not
    reachable get an explicit zero gradient.
    """
    if loss.shape != (1, 1):
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    grads = {loss.id: np.ones((1, 1))}
    for node in reversed(order):
        g = grads.get(node.id)
        if g is None:
            continue
        node.grad = g
        if node._backward is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = np.asarray(pg, dtype=np.float64)
    for p in params:
        if p.id not in grads:
            grads[p.id] = np.zeros(p.shape)
            p.grad = grads[p.id]
    return grads
