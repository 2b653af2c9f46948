"""Independent dense / loop reference implementations used by the tests.

Nothing here imports the package's numeric code; graphs come in as plain
``(n, edges)`` and parameters as plain arrays.
"""

import math

import numpy as np


def matmul_loops(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def dense_adj(n, edges):
    a = np.zeros((n, n))
    for u, v in edges:
        a[u, v] = a[v, u] = 1.0
    return a


def sym_selfloop(n, edges):
    a = dense_adj(n, edges) + np.eye(n)
    d = a.sum(axis=1)
    return a / np.sqrt(np.outer(d, d))


def rw_selfloop(n, edges):
    a = dense_adj(n, edges) + np.eye(n)
    return a / a.sum(axis=1, keepdims=True)


def mean_adj(n, edges):
    a = dense_adj(n, edges)
    deg = a.sum(axis=1, keepdims=True)
    return np.divide(a, deg, out=np.zeros_like(a), where=deg > 0)


def relu(x):
    return np.maximum(x, 0.0)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def act(x, kind):
    return {"relu": relu, "elu": elu, "none": lambda z: z}[kind](x)


def softmax_loop(x):
    out = np.zeros_like(x)
    for i, row in enumerate(x):
        m = max(row)
        e = [math.exp(v - m) for v in row]
        s = sum(e)
        out[i] = [v / s for v in e]
    return out


def cross_entropy_loop(logits, labels, idx):
    total = 0.0
    for i in idx:
        row = logits[i]
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total += lse - row[labels[i]]
    return total / len(idx)


# --- layers ---------------------------------------------------------------

def gcn(n, edges, H, W):
    return sym_selfloop(n, edges) @ H @ W


def gat(n, edges, H, W, a_src, a_dst, slope=0.2):
    wh = H @ W
    nbrs = [{u} for u in range(n)]
    for u, v in edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    out = np.zeros((n, W.shape[1]))
    for u in range(n):
        js = sorted(nbrs[u])
        e = []
        for j in js:
            s = float(wh[u] @ a_src[:, 0] + wh[j] @ a_dst[:, 0])
            e.append(s if s > 0 else slope * s)
        m = max(e)
        w = np.exp(np.array(e) - m)
        w /= w.sum()
        for wj, j in zip(w, js):
            out[u] += wj * wh[j]
    return out


def sage(n, edges, H, W_self, W_neigh):
    return H @ W_self + mean_adj(n, edges) @ H @ W_neigh


def gin(n, edges, H, eps, W1, b1, W2, b2, kind="relu"):
    combined = (1.0 + eps) * H + dense_adj(n, edges) @ H
    return act(combined @ W1 + b1, kind) @ W2 + b2


def mlp(H, W1, b1, W2=None, b2=None, kind="relu"):
    out = H @ W1 + b1
    if W2 is None:
        return out
    return act(out, kind) @ W2 + b2


def aggregate(kind, n, edges, H, w, act_kind="relu"):
    if kind == "GCN":
        return gcn(n, edges, H, w["W"])
    if kind == "GAT":
        return gat(n, edges, H, w["W"], w["a_src"], w["a_dst"])
    if kind == "SAGE":
        return sage(n, edges, H, w["W_self"], w["W_neigh"])
    if kind == "GIN":
        return gin(n, edges, H, float(w["eps"][0, 0]), w["W1"], w["b1"], w["W2"], w["b2"], act_kind)
    raise ValueError(kind)


# --- fusions --------------------------------------------------------------

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def fuse(op, inputs, w=None, slots=None, total_slots=None):
    if op == "SUM":
        return sum(inputs)
    if op == "MEAN":
        return sum(inputs) / len(inputs)
    if op == "MAX":
        return np.maximum.reduce(inputs)
    if op == "CONCAT":
        # zero-fill dropped levels and use the full projection
        d = inputs[0].shape[1]
        slots = list(range(len(inputs))) if slots is None else list(slots)
        total_slots = w["P"].shape[0] // d if total_slots is None else total_slots
        full = np.zeros((inputs[0].shape[0], total_slots * d))
        for x, s in zip(inputs, slots):
            full[:, s * d:(s + 1) * d] = x
        return full @ w["P"]
    if op == "LSTM":
        d = inputs[0].shape[1]
        h = np.zeros_like(inputs[0])
        c = np.zeros_like(inputs[0])
        for x in inputs:
            z = x @ w["Wx"] + h @ w["Wh"] + w["b"]
            i, f = _sigmoid(z[:, :d]), _sigmoid(z[:, d:2 * d])
            g, o = np.tanh(z[:, 2 * d:3 * d]), _sigmoid(z[:, 3 * d:])
            c = f * c + i * g
            h = o * np.tanh(c)
        return h
    if op == "ATT":
        scores = np.concatenate([x @ w["a"] for x in inputs], axis=1)
        a = softmax_loop(scores)
        return sum(a[:, [j]] * x for j, x in enumerate(inputs))
    raise ValueError(op)


# --- metrics --------------------------------------------------------------

def mad_pairs(H, n, edges, all_pairs=False):
    targets = [set() for _ in range(n)]
    if all_pairs:
        for u in range(n):
            targets[u] = set(range(n)) - {u}
    else:
        for u, v in edges:
            targets[u].add(v)
            targets[v].add(u)
    per = []
    for u in range(n):
        if not targets[u]:
            continue
        ds = []
        for v in targets[u]:
            nu, nv = np.linalg.norm(H[u]), np.linalg.norm(H[v])
            ds.append(1.0 if nu == 0 or nv == 0 else 1.0 - float(H[u] @ H[v]) / (nu * nv))
        per.append(sum(ds) / len(ds))
    return sum(per) / len(per)


def homophily_loop(edges, labels):
    same = sum(1 for u, v in edges if labels[u] == labels[v])
    return same / len(edges)


def adam_loop(p, grads, lr, wd=0.0, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar-by-scalar Adam with decoupled weight decay."""
    p = np.array(p, dtype=float)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        for i in np.ndindex(p.shape):
            p[i] -= lr * wd * p[i]
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            p[i] -= lr * mh / (math.sqrt(vh) + eps)
    return p


def adagrad_loop(p, grads, lr, wd=0.0, eps=1e-10):
    p = np.array(p, dtype=float)
    acc = np.zeros_like(p)
    for g in grads:
        for i in np.ndindex(p.shape):
            p[i] -= lr * wd * p[i]
            acc[i] += g[i] ** 2
            p[i] -= lr * g[i] / (math.sqrt(acc[i]) + eps)
    return p


# --- classic designs, written as plain recurrences -------------------------

def classic_forward(name, n, edges, X, w):
    """Logits of a classic design from its layer recurrence.

    ``w`` holds plain arrays: ``inp`` (W1, b1), ``layers`` (per-layer weight
    dicts), ``agg``, ``act``, ``concat`` (per-layer projection, dense only),
    ``out_fusion`` (weight dict), ``jk_fusion`` and ``out`` (W1, b1, W2, b2).
    """
    a = w["act"]

    def f_a(l, H):
        return act(aggregate(w["agg"], n, edges, H, w["layers"][l], a), a)

    H = [X @ w["inp"]["W1"] + w["inp"]["b1"]]
    L = len(w["layers"])
    for l in range(L):
        if name in ("vanilla", "jk"):
            x = H[l]
        elif name == "res":
            x = H[l] + H[l - 1] if l >= 1 else H[0]
        elif name == "gnnii":
            x = H[0] + H[l] if l >= 1 else H[0]
        elif name == "dense":
            x = np.concatenate(H, axis=1) @ w["concat"][l]
        else:
            raise ValueError(name)
        H.append(f_a(l, x))
    if name == "jk":
        final = fuse(w["jk_fusion"], H[1:], w["out_fusion"], slots=range(1, L + 1), total_slots=L + 1)
    elif name == "dense":
        final = np.concatenate(H, axis=1) @ w["out_fusion"]["P"]
    else:
        final = H[L]
    o = w["out"]
    return mlp(final, o["W1"], o["b1"], o["W2"], o["b2"], a)
