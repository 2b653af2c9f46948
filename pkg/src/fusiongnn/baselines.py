"""Classic GNN topologies expressed in the framework, plus MixHop and random topologies.

``translate`` maps a named design onto a :class:`TopologySpec`:

* ``vanilla``: block i selects {i-1}; output selects {L}
* ``res``: block i selects {i-2, i-1} (just {0} for i=1), SUM; output selects {L}
* ``dense``: block i selects {0..i-1}, CONCAT; output selects {0..L}, CONCAT
* ``jk``: vanilla chain; output selects {1..L} with the chosen fusion
* ``gnnii``: block i selects {0, i-1}, SUM; output selects {L}
* ``pna``: L levels of M parallel blocks; level 1 reads H0, each later level
  reads every block of the previous level through CONCAT; the output concatenates
  the last level.

MixHop's adjacency powers fall outside the aggregation set and get a direct
implementation (:class:`MixHopNet`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionError, UsageError
from .graph import Graph
from .layers import AGGREGATIONS, glorot, init_mlp, mlp_forward
from .topology import FUSIONS, BlockSpec, TopologySpec, check_spec

BASELINES = ("vanilla", "res", "dense", "jk", "gnnii", "pna", "mixhop", "random")
TRANSLATABLE = ("vanilla", "res", "dense", "jk", "gnnii", "pna")


def _mask(width, selected):
    bits = [0] * width
    for j in selected:
        bits[j] = 1
    return tuple(bits)


def translate(name, depth=4, agg="SAGE", *, jk_fusion="CONCAT", pna_width=2, hidden=64,
              act="relu") -> TopologySpec:
    """Topology spec for a named design. ``agg`` may be a list for ``pna`` (one per branch)."""
    if name not in TRANSLATABLE:
        raise UsageError(f"cannot translate '{name}'; choose from {', '.join(TRANSLATABLE)}")
    if depth < 1:
        raise UsageError("depth must be >= 1")
    if name == "pna":
        return _pna(depth, agg, pna_width, hidden, act)
    if not isinstance(agg, str):
        raise UsageError(f"'{name}' takes a single aggregation")
    if agg not in AGGREGATIONS:
        raise UsageError(f"unknown aggregation '{agg}'")
    blocks = []
    for i in range(1, depth + 1):
        if name in ("vanilla", "jk"):
            sel, fuse = [i - 1], "SUM"
        elif name == "res":
            sel, fuse = [max(i - 2, 0), i - 1] if i >= 2 else [0], "SUM"
        elif name == "dense":
            sel, fuse = list(range(i)), "CONCAT"
        else:  # gnnii
            sel, fuse = sorted({0, i - 1}), "SUM"
        blocks.append(BlockSpec(_mask(i, sel), fuse, agg))
    if name == "jk":
        if jk_fusion not in FUSIONS:
            raise UsageError(f"unknown fusion '{jk_fusion}'")
        out_sel, out_fuse = range(1, depth + 1), jk_fusion
    elif name == "dense":
        out_sel, out_fuse = range(depth + 1), "CONCAT"
    else:
        out_sel, out_fuse = [depth], "SUM"
    return check_spec(TopologySpec(tuple(blocks), _mask(depth + 1, out_sel), out_fuse, hidden, act))


def _pna(depth, agg, width, hidden, act):
    aggs = [agg] * width if isinstance(agg, str) else list(agg)
    if len(aggs) != width:
        raise UsageError(f"pna: {len(aggs)} aggregations for width {width}")
    for a in aggs:
        if a not in AGGREGATIONS:
            raise UsageError(f"unknown aggregation '{a}'")
    blocks, prev = [], [0]
    for _level in range(depth):
        current = []
        for a in aggs:
            i = len(blocks) + 1
            fuse = "SUM" if prev == [0] else "CONCAT"
            blocks.append(BlockSpec(_mask(i, prev), fuse, a))
            current.append(i)
        prev = current
    n = len(blocks)
    return check_spec(TopologySpec(tuple(blocks), _mask(n + 1, prev), "CONCAT", hidden, act))


def random_spec(n_blocks, seed=0, learnable_agg=True, agg="SAGE", hidden=64, act="relu") -> TopologySpec:
    """Uniformly random topology; the output mask is resampled until non-empty."""
    if n_blocks < 1:
        raise UsageError("n_blocks must be >= 1")
    rng = np.random.default_rng(seed)
    blocks = []
    for i in range(1, n_blocks + 1):
        bits = tuple(int(b) for b in rng.integers(0, 2, size=i))
        fuse = FUSIONS[rng.integers(len(FUSIONS))]
        a = AGGREGATIONS[rng.integers(len(AGGREGATIONS))] if learnable_agg else agg
        blocks.append(BlockSpec(bits, fuse, a))
    while True:
        out = tuple(int(b) for b in rng.integers(0, 2, size=n_blocks + 1))
        if any(out):
            break
    fuse = FUSIONS[rng.integers(len(FUSIONS))]
    return TopologySpec(tuple(blocks), out, fuse, hidden, act)


# --- MixHop ---------------------------------------------------------------

@dataclass
class MixHopParams:
    powers: tuple
    in_dim: int
    out_dim: int
    weights: dict = field(default_factory=dict)

    def parameters(self):
        return [self.weights[k] for k in sorted(self.weights)]


def init_mixhop(powers, in_dim, out_dim, rng) -> MixHopParams:
    powers = tuple(powers)
    if not powers:
        raise UsageError("MixHop needs at least one adjacency power")
    if len(set(powers)) != len(powers) or min(powers) < 0:
        raise UsageError("MixHop powers must be distinct non-negative integers")
    w = {f"W{p}": glorot(rng, in_dim, out_dim, f"mixhop.W{p}") for p in powers}
    w["P"] = glorot(rng, len(powers) * out_dim, out_dim, "mixhop.P")
    return MixHopParams(powers, in_dim, out_dim, w)


def mixhop_forward(p: MixHopParams, H: T.Value, g: Graph, powers=None) -> T.Value:
    """``concat_{i in P}(A^i H W_i) @ proj`` with the symmetric self-loop operator; ``A^0 = I``."""
    powers = p.powers if powers is None else tuple(powers)
    if not powers:
        raise UsageError("MixHop needs at least one adjacency power")
    if H.shape[1] != p.in_dim:
        raise DimensionError(f"MixHop: input width {H.shape[1]} != {p.in_dim}")
    a = g.adjacency("sym-selfloop")
    branches = []
    for k in powers:
        x = T.matmul(H, p.weights[f"W{k}"])
        for _ in range(k):
            x = T.spmm(a, x)
        branches.append(x)
    return T.matmul(T.concat_cols(branches), p.weights["P"])


@dataclass
class MixHopNet:
    """Input MLP, ``depth`` MixHop layers with activation, 2-layer output MLP."""

    input_mlp: object
    layers: list
    output_mlp: object
    act: str = "relu"
    dropout: float = 0.0

    def parameters(self):
        out = self.input_mlp.parameters()
        for layer in self.layers:
            out += layer.parameters()
        return out + self.output_mlp.parameters()

    def snapshot(self):
        return [p.data.copy() for p in self.parameters()]

    def restore(self, snap):
        for p, data in zip(self.parameters(), snap):
            p.data[...] = data

    def forward(self, g, mode="eval", rng=None):
        drop = self.dropout if mode == "train" else 0.0
        h = T.dropout(mlp_forward(self.input_mlp, T.Value(g.features)), drop, rng)
        for layer in self.layers:
            h = T.dropout(T.activation(mixhop_forward(layer, h, g), self.act), drop, rng)
        return mlp_forward(self.output_mlp, h)


def build_mixhop(in_dim, num_classes, depth=2, powers=(0, 1, 2), hidden=64, act="relu", seed=0,
                 dropout=0.0) -> MixHopNet:
    rng = np.random.default_rng(seed)
    input_mlp = init_mlp(in_dim, hidden, rng, layers=1)
    layers = [init_mixhop(powers, hidden, hidden, rng) for _ in range(depth)]
    output_mlp = init_mlp(hidden, num_classes, rng, hidden=hidden, act=act)
    return MixHopNet(input_mlp, layers, output_mlp, act, dropout)
