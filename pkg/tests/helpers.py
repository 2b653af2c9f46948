import numpy as np

from fusiongnn import tensor as T
from fusiongnn.graph import Graph, SplitConfig, split_nodes


def random_graph(n, seed, p=0.3, features=4, classes=2, masks=True):
    rng = np.random.default_rng(seed)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    if not edges:
        edges = [(0, 1)]
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    g = Graph(n, np.array(edges, dtype=np.int64), rng.normal(size=(n, features)), labels, classes)
    if masks:
        g.set_masks(split_nodes(g, SplitConfig(0.5, 0.25, 0.25, seed=seed, stratified=False)))
    return g


def edge_list(g):
    return [tuple(map(int, e)) for e in g.edges]


def gradcheck(build, params, seed=0, h=1e-6, max_entries=8):
    """Relative error ``|ana - num| / max(|ana|, |num|)`` of the gradient vector.

    ``build()`` returns an output Value, contracted against a fixed random
    matrix so every output entry feeds the scalar loss. Up to ``max_entries``
    random entries per parameter are checked by central differences.
    """
    rng = np.random.default_rng(seed)
    out = build()
    proj = T.constant(rng.normal(size=out.shape))

    def loss():
        return T.total(T.mul(build(), proj)).data[0, 0]

    grads = T.backward(T.total(T.mul(build(), proj)), params)
    ana, num = [], []
    for p in params:
        flat = list(np.ndindex(p.shape))
        if len(flat) > max_entries:
            flat = [flat[k] for k in rng.choice(len(flat), max_entries, replace=False)]
        for idx in flat:
            old = p.data[idx]
            p.data[idx] = old + h
            up = loss()
            p.data[idx] = old - h
            down = loss()
            p.data[idx] = old
            num.append((up - down) / (2 * h))
            ana.append(grads[p.id][idx])
    ana, num = np.array(ana), np.array(num)
    denom = max(np.linalg.norm(ana), np.linalg.norm(num), 1e-12)
    return float(np.linalg.norm(ana - num) / denom)
