"""Executable discrete topologies ("childnets") and their full-graph trainer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionError, NonFiniteError, TrainingError, UsageError
from .fusion import FusionParams, fuse, init_fusion
from .graph import Graph
from .layers import LayerParams, aggregate, init_layer, init_mlp, mlp_forward
from .metrics import accuracy
from .optim import make_optimizer, optimizer_step
from .topology import BlockSpec, TopologySpec, check_spec

log = logging.getLogger(__name__)


@dataclass
class ChildNet:
    spec: TopologySpec
    input_mlp: LayerParams
    layers: list
    fusions: list
    output_fusion: FusionParams
    output_mlp: LayerParams
    dropout: float = 0.0

    @property
    def hidden(self):
        return self.spec.hidden

    def parameters(self):
        groups = [self.input_mlp, *self.layers, *self.fusions, self.output_fusion, self.output_mlp]
        seen, out = set(), []
        for grp in groups:
            for p in grp.parameters():
                if p.id not in seen:
                    seen.add(p.id)
                    out.append(p)
        return out

    def block_parameters(self, i):
        """Parameters owned by SFA block ``i`` (1-based)."""
        return self.layers[i - 1].parameters() + self.fusions[i - 1].parameters()

    def snapshot(self):
        return [p.data.copy() for p in self.parameters()]

    def restore(self, snap):
        for p, data in zip(self.parameters(), snap):
            p.data[...] = data

    def forward(self, g, mode="eval", rng=None):
        return childnet_forward(self, g, mode, rng)


def build_childnet(spec: TopologySpec, in_dim, num_classes, seed=0, dropout=0.0, heads=1) -> ChildNet:
    check_spec(spec)
    rng = np.random.default_rng(seed)
    d = spec.hidden
    input_mlp = init_mlp(in_dim, d, rng, layers=1)
    layers, fusions = [], []
    for i, b in enumerate(spec.blocks, start=1):
        fusions.append(init_fusion(b.fuse, d, i, rng))
        layers.append(init_layer(b.agg, d, d, rng, act=spec.act, heads=heads))
    out_fusion = init_fusion(spec.output_fuse, d, spec.n_blocks + 1, rng)
    out_mlp = init_mlp(d, num_classes, rng, hidden=d, act=spec.act)
    return ChildNet(spec, input_mlp, layers, fusions, out_fusion, out_mlp, dropout)


def sfa_block_forward(block: BlockSpec, layer: LayerParams, fusion: FusionParams, inputs, g: Graph,
                      act="relu", dropout=0.0, rng=None) -> T.Value:
    """Selection, fusion, aggregation, activation, dropout.

    ``inputs`` are all predecessor outputs in level order. A block that selects
    nothing returns zeros.
    """
    if len(inputs) != len(block.select):
        raise DimensionError(f"block expects {len(block.select)} inputs, got {len(inputs)}")
    chosen = block.selected
    if not chosen:
        return T.Value(np.zeros((g.n, layer.out_dim)))
    fused = fuse(block.fuse, fusion, [inputs[j] for j in chosen], slots=chosen)
    out = T.activation(aggregate(layer, fused, g), act)
    return T.dropout(out, dropout, rng)


def childnet_forward(net: ChildNet, g: Graph, mode="eval", rng=None, return_levels=False):
    """Logits for every node. ``mode='train'`` with an ``rng`` enables dropout.

    With ``return_levels`` also returns ``[H0..HN]`` and the fused output-block input.
    """
    if mode not in ("train", "eval"):
        raise UsageError(f"mode must be 'train' or 'eval', got '{mode}'")
    if g.num_features != net.input_mlp.in_dim:
        raise DimensionError(f"graph has {g.num_features} features, net expects {net.input_mlp.in_dim}")
    drop = net.dropout if mode == "train" else 0.0
    spec = net.spec
    h0 = T.dropout(mlp_forward(net.input_mlp, T.Value(g.features)), drop, rng)
    levels = [h0]
    for b, layer, fusion in zip(spec.blocks, net.layers, net.fusions):
        levels.append(sfa_block_forward(b, layer, fusion, levels, g, spec.act, drop, rng))
    chosen = spec.output_selected
    fused = fuse(spec.output_fuse, net.output_fusion, [levels[j] for j in chosen], slots=chosen)
    logits = mlp_forward(net.output_mlp, fused)
    if return_levels:
        return logits, levels, fused
    return logits


# --- training -------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.005
    weight_decay: float = 5e-4
    optimizer: str = "adam"
    seed: int = 0
    patience: int = 100


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("nan")
    train_acc: float = float("nan")
    val_acc: float = float("nan")
    test_acc: float = float("nan")


def evaluate(net, g: Graph):
    logits = net.forward(g, "eval").data
    return {k: accuracy(logits, g.labels, g.masks[k]) for k in ("train", "val", "test")}


def train_childnet(net, g: Graph, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Full-graph training on the train mask with early stopping on val accuracy.

    ``net`` is a :class:`ChildNet` or any model exposing ``forward``,
    ``parameters``, ``snapshot`` and ``restore``. The parameters of the
    best-validation epoch are restored on return.
    """
    masks = g.require_masks()
    result = TrainResult()
    if cfg.epochs <= 0:
        return result
    rng = np.random.default_rng(cfg.seed)
    params = net.parameters()
    opt = make_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    best, best_snap, stale = -1.0, None, 0
    for epoch in range(1, cfg.epochs + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                logits = net.forward(g, "train", rng)
                loss = T.cross_entropy(logits, g.labels, masks["train"])
                optimizer_step(opt, params, T.backward(loss, params))
                if not all(np.isfinite(p.data).all() for p in params):
                    raise NonFiniteError("parameters became non-finite")
                acc = evaluate(net, g)
        except NonFiniteError as exc:
            raise TrainingError(f"diverged ({exc})", epoch) from exc
        result.history.append({"epoch": epoch, "loss": float(loss.data[0, 0]),
                               "train_acc": acc["train"], "val_acc": acc["val"]})
        if acc["val"] > best:
            best, best_snap, stale = acc["val"], net.snapshot(), 0
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    net.restore(best_snap)
    final = evaluate(net, g)
    result.best_val = best
    result.train_acc, result.val_acc, result.test_acc = final["train"], final["val"], final["test"]
    return result
