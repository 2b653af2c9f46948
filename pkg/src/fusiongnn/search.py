"""Differentiable topology search over the selection/fusion/aggregation space.

Every mixed operation holds a vector of architecture parameters ``alpha``;
its candidate weights are ``softmax(alpha / temperature)``. A small
temperature pushes the weights towards one-hot, which keeps the trained
supernet close to the childnet derived from it.

Inputs whose selection weight is exactly zero are left out of the fusion,
the same way a derived childnet drops ZERO-selected inputs. With non-zero
weights everywhere the mixed fusion is the plain weighted sum of candidates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .childnet import ChildNet, TrainConfig, build_childnet, train_childnet
from .errors import NonFiniteError, SearchError, UsageError
from .fusion import FusionParams, fuse, init_fusion
from .graph import Graph
from .layers import AGGREGATIONS, aggregate, init_layer, init_mlp, mlp_forward
from .metrics import accuracy
from .optim import make_optimizer, optimizer_step
from .topology import FUSIONS, SELECTIONS, BlockSpec, TopologySpec

log = logging.getLogger(__name__)

IDENTITY = SELECTIONS.index("IDENTITY")


def softmax_with_temperature(alpha, temperature):
    """``exp(alpha_k / t) / sum_i exp(alpha_i / t)``, max-shifted."""
    if not temperature > 0:
        raise UsageError(f"temperature must be positive, got {temperature}")
    a = np.asarray(alpha, dtype=np.float64) / temperature
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def op_weights(alpha: T.Value, temperature) -> T.Value:
    """Differentiable row-wise temperature softmax of an alpha matrix."""
    if not temperature > 0:
        raise UsageError(f"temperature must be positive, got {temperature}")
    return T.softmax_rows(T.scale(alpha, 1.0 / temperature))


def mixed_selection(c, x: T.Value) -> T.Value:
    """``c_zero * 0 + c_identity * x``; ``c`` is a 2-vector (array or ``(1, 2)`` Value)."""
    if isinstance(c, T.Value):
        return T.mul(T.slice_cols(c, IDENTITY, IDENTITY + 1), x)
    return T.scale(x, float(np.asarray(c).ravel()[IDENTITY]))


def mixed_fusion(c, params: dict, inputs, presence=None, slots=None) -> T.Value:
    """Weighted sum of all fusion candidates over ``inputs``.

    ``presence`` holds each input's selection weight; inputs at exactly zero
    are left out. Candidates with zero weight are skipped. If nothing is
    present the result is zeros.
    """
    if not inputs:
        raise UsageError("mixed fusion over an empty input list")
    if slots is None:
        slots = list(range(len(inputs)))
    if presence is not None:
        keep = [k for k, w in enumerate(presence) if w != 0.0]
        inputs = [inputs[k] for k in keep]
        slots = [slots[k] for k in keep]
        if not inputs:
            return None
    cval = c.data[0] if isinstance(c, T.Value) else np.asarray(c, dtype=np.float64).ravel()
    terms = []
    for k, op in enumerate(FUSIONS):
        if cval[k] == 0.0:
            continue
        out = fuse(op, params.get(op), inputs, slots=slots)
        weight = T.slice_cols(c, k, k + 1) if isinstance(c, T.Value) else float(cval[k])
        terms.append(T.mul(weight, out) if isinstance(weight, T.Value) else T.scale(out, weight))
    return T.reduce_sum(terms)


# --- supernet -------------------------------------------------------------

@dataclass
class SearchConfig:
    n_blocks: int = 4
    hidden: int = 32
    aggs: tuple = ("SAGE",)  # one entry = fixed aggregation, several = learnable
    act: str = "relu"
    dropout: float = 0.0
    temperature: float = 0.001
    epochs: int = 400
    w_lr: float = 0.005
    w_weight_decay: float = 5e-4
    w_optimizer: str = "adam"
    a_lr: float = 0.003
    a_weight_decay: float = 1e-3
    a_optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        self.aggs = tuple(self.aggs)
        if self.n_blocks < 1:
            raise UsageError("n_blocks must be >= 1")
        if not self.temperature > 0:
            raise UsageError("temperature must be positive")
        if self.epochs < 0:
            raise UsageError("epochs must be >= 0")
        if self.w_lr <= 0 or self.a_lr < 0:
            raise UsageError("learning rates must be positive")
        for a in self.aggs:
            if a not in AGGREGATIONS:
                raise UsageError(f"unknown aggregation '{a}'")


@dataclass
class Supernet:
    n_blocks: int
    hidden: int
    temperature: float
    aggs: tuple
    act: str
    dropout: float
    input_mlp: object
    output_mlp: object
    alpha_select: list  # block i: (i, 2); last entry: output (N+1, 2)
    alpha_fuse: list  # block i / output: (1, 6)
    alpha_agg: list  # block i: (1, |aggs|) when learnable, else empty
    fusion_params: list  # per block and output: {op: FusionParams}
    layer_params: list  # per block: {agg: LayerParams}

    @property
    def learnable_agg(self):
        return len(self.aggs) > 1

    def weight_parameters(self):
        out = self.input_mlp.parameters()
        for fp in self.fusion_params:
            for op in FUSIONS:
                out += fp[op].parameters()
        for lp in self.layer_params:
            for a in self.aggs:
                out += lp[a].parameters()
        return out + self.output_mlp.parameters()

    def arch_parameters(self):
        return [*self.alpha_select, *self.alpha_fuse, *self.alpha_agg]

    def weights(self):
        """Current candidate weights as numpy arrays, keyed like the alphas."""
        t = self.temperature
        return {
            "select": [softmax_with_temperature(a.data, t) for a in self.alpha_select],
            "fuse": [softmax_with_temperature(a.data, t)[0] for a in self.alpha_fuse],
            "agg": [softmax_with_temperature(a.data, t)[0] for a in self.alpha_agg],
        }


def build_supernet(in_dim, num_classes, cfg: SearchConfig) -> Supernet:
    rng = np.random.default_rng(cfg.seed)
    d, n = cfg.hidden, cfg.n_blocks
    input_mlp = init_mlp(in_dim, d, rng, layers=1)
    fusion_params, layer_params = [], []
    for i in range(1, n + 1):
        fusion_params.append({op: init_fusion(op, d, i, rng) for op in FUSIONS})
        layer_params.append({a: init_layer(a, d, d, rng, act=cfg.act) for a in cfg.aggs})
    fusion_params.append({op: init_fusion(op, d, n + 1, rng) for op in FUSIONS})
    output_mlp = init_mlp(d, num_classes, rng, hidden=d, act=cfg.act)

    def noise(shape, name):
        return T.parameter(rng.uniform(-1e-3, 1e-3, size=shape), name=name)

    alpha_select = [noise((i, len(SELECTIONS)), f"alpha.select{i}") for i in range(1, n + 2)]
    alpha_fuse = [noise((1, len(FUSIONS)), f"alpha.fuse{i}") for i in range(1, n + 2)]
    alpha_agg = [noise((1, len(cfg.aggs)), f"alpha.agg{i}") for i in range(1, n + 1)] \
        if len(cfg.aggs) > 1 else []
    return Supernet(n, d, cfg.temperature, cfg.aggs, cfg.act, cfg.dropout, input_mlp, output_mlp,
                    alpha_select, alpha_fuse, alpha_agg, fusion_params, layer_params)


def _mixed_block(s: Supernet, k, levels):
    """Selection + fusion for block ``k`` (0-based; ``k == N`` is the output block)."""
    t = s.temperature
    c_sel = op_weights(s.alpha_select[k], t)
    selected = [mixed_selection(T.slice_cols(T.take_rows(c_sel, [j]), 0, 2), h)
                for j, h in enumerate(levels)]
    presence = c_sel.data[:, IDENTITY]
    c_fuse = op_weights(s.alpha_fuse[k], t)
    return mixed_fusion(c_fuse, s.fusion_params[k], selected, presence=presence)


def supernet_forward(s: Supernet, g: Graph, mode="eval", rng=None, return_levels=False):
    drop = s.dropout if mode == "train" else 0.0
    h0 = T.dropout(mlp_forward(s.input_mlp, T.Value(g.features)), drop, rng)
    levels = [h0]
    for k in range(s.n_blocks):
        fused = _mixed_block(s, k, levels)
        if fused is None:
            levels.append(T.Value(np.zeros((g.n, s.hidden))))
            continue
        if s.learnable_agg:
            c_agg = op_weights(s.alpha_agg[k], s.temperature)
            terms = []
            for j, a in enumerate(s.aggs):
                if c_agg.data[0, j] == 0.0:
                    continue
                out = aggregate(s.layer_params[k][a], fused, g)
                terms.append(T.mul(T.slice_cols(c_agg, j, j + 1), out))
            h = T.reduce_sum(terms)
        else:
            h = aggregate(s.layer_params[k][s.aggs[0]], fused, g)
        levels.append(T.dropout(T.activation(h, s.act), drop, rng))
    fused = _mixed_block(s, s.n_blocks, levels)
    if fused is None:
        fused = T.Value(np.zeros((g.n, s.hidden)))
    logits = mlp_forward(s.output_mlp, fused)
    if return_levels:
        return logits, levels, fused
    return logits


# --- derivation -----------------------------------------------------------

def derive_details(s: Supernet):
    """Argmax per mixed op (ties to the lowest index, ZERO before IDENTITY).

    Returns ``(spec, forced)`` where ``forced`` is the output level switched on
    because every output selection derived ZERO, else ``None``.
    """
    blocks = []
    for k in range(s.n_blocks):
        sel = tuple(int(np.argmax(row)) for row in s.alpha_select[k].data)
        fuse_op = FUSIONS[int(np.argmax(s.alpha_fuse[k].data[0]))]
        agg = s.aggs[int(np.argmax(s.alpha_agg[k].data[0]))] if s.learnable_agg else s.aggs[0]
        blocks.append(BlockSpec(sel, fuse_op, agg))
    out_alpha = s.alpha_select[s.n_blocks].data
    out = [int(np.argmax(row)) for row in out_alpha]
    forced = None
    if not any(out):
        forced = int(np.argmax(out_alpha[:, IDENTITY]))
        out[forced] = 1
        log.warning("derived output mask was empty; forced level %d on", forced)
    out_fuse = FUSIONS[int(np.argmax(s.alpha_fuse[s.n_blocks].data[0]))]
    return TopologySpec(tuple(blocks), tuple(out), out_fuse, s.hidden, s.act), forced


def derive(s: Supernet) -> TopologySpec:
    return derive_details(s)[0]


def childnet_from_supernet(s: Supernet, spec: TopologySpec | None = None) -> ChildNet:
    """Childnet that shares (not copies) the supernet's weights for the chosen ops."""
    spec = spec or derive(s)
    layers = [s.layer_params[k][b.agg] for k, b in enumerate(spec.blocks)]
    fusions = [s.fusion_params[k][b.fuse] for k, b in enumerate(spec.blocks)]
    out_fusion = s.fusion_params[s.n_blocks][spec.output_fuse]
    return ChildNet(spec, s.input_mlp, layers, fusions, out_fusion, s.output_mlp, s.dropout)


def set_one_hot(s: Supernet, spec: TopologySpec, margin=1.0):
    """Set alphas so that, at a small temperature, the weights are exactly ``spec``'s choices."""
    def hot(width, idx):
        row = np.zeros(width)
        row[idx] = margin
        return row

    for k, b in enumerate(spec.blocks):
        s.alpha_select[k].data[...] = [hot(2, bit) for bit in b.select]
        s.alpha_fuse[k].data[0] = hot(len(FUSIONS), FUSIONS.index(b.fuse))
        if s.learnable_agg:
            s.alpha_agg[k].data[0] = hot(len(s.aggs), s.aggs.index(b.agg))
    s.alpha_select[s.n_blocks].data[...] = [hot(2, bit) for bit in spec.output_select]
    s.alpha_fuse[s.n_blocks].data[0] = hot(len(FUSIONS), FUSIONS.index(spec.output_fuse))


# --- search ---------------------------------------------------------------

@dataclass
class SearchResult:
    spec: TopologySpec
    history: list = field(default_factory=list)
    forced: int | None = None


def _check_finite(params):
    if not all(np.isfinite(p.data).all() for p in params):
        raise NonFiniteError("parameters became non-finite")


def search(s: Supernet, g: Graph, cfg: SearchConfig) -> SearchResult:
    """First-order alternating updates: weights on the train loss, alphas on the val loss."""
    masks = g.require_masks()
    rng = np.random.default_rng(cfg.seed + 1)
    w_params, a_params = s.weight_parameters(), s.arch_parameters()
    w_opt = make_optimizer(cfg.w_optimizer, cfg.w_lr, cfg.w_weight_decay)
    a_opt = make_optimizer(cfg.a_optimizer, cfg.a_lr, cfg.a_weight_decay)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            step = "weight"
            try:
                logits = supernet_forward(s, g, "train", rng)
                train_loss = T.cross_entropy(logits, g.labels, masks["train"])
                optimizer_step(w_opt, w_params, T.backward(train_loss, w_params))
                _check_finite(w_params)
                step = "arch"
                logits = supernet_forward(s, g, "train", rng)
                val_loss = T.cross_entropy(logits, g.labels, masks["val"])
                if a_params:
                    optimizer_step(a_opt, a_params, T.backward(val_loss, a_params))
                    _check_finite(a_params)
            except NonFiniteError as exc:
                raise SearchError(str(exc), epoch, step) from exc
        history.append({
            "epoch": epoch,
            "train_loss": float(train_loss.data[0, 0]),
            "val_loss": float(val_loss.data[0, 0]),
            "train_acc": accuracy(logits.data, g.labels, masks["train"]),
            "val_acc": accuracy(logits.data, g.labels, masks["val"]),
        })
    spec, forced = derive_details(s)
    return SearchResult(spec, history, forced)


def run_search(g: Graph, cfg: SearchConfig):
    """Build a supernet for ``g``, search it and return ``(supernet, result)``."""
    s = build_supernet(g.num_features, g.num_classes, cfg)
    return s, search(s, g, cfg)


# --- optimisation gap -----------------------------------------------------

@dataclass
class GapRow:
    temperature: float
    supernet_val: float
    childnet_val: float
    max_logit_diff: float
    forced: int | None
    spec: TopologySpec

    @property
    def gap(self):
        return abs(self.supernet_val - self.childnet_val)

    def record(self):
        return {"lambda": self.temperature, "supernet_val": self.supernet_val,
                "childnet_val": self.childnet_val, "gap": self.gap,
                "max_logit_diff": self.max_logit_diff,
                "forced": "none" if self.forced is None else self.forced}


def measure_gap(g: Graph, cfg: SearchConfig, temperatures) -> list:
    """Search once per temperature and compare supernet vs derived childnet.

    The childnet inherits the supernet's weights and uses hard choices, with no
    fine-tuning; both are evaluated on the validation mask.
    """
    temperatures = list(temperatures)
    if not temperatures:
        raise UsageError("measure_gap needs at least one temperature")
    rows = []
    for t in temperatures:
        run_cfg = SearchConfig(**{**cfg.__dict__, "temperature": t})
        s, res = run_search(g, run_cfg)
        sup = supernet_forward(s, g, "eval").data
        child = childnet_from_supernet(s, res.spec).forward(g, "eval").data
        val = g.masks["val"]
        rows.append(GapRow(t, accuracy(sup, g.labels, val), accuracy(child, g.labels, val),
                           float(np.abs(sup - child).max()), res.forced, res.spec))
    return rows


def retrain_derived(spec: TopologySpec, g: Graph, train_cfg: TrainConfig, seed=0, dropout=0.0):
    """Train the derived topology from scratch (fresh weights)."""
    net = build_childnet(spec, g.num_features, g.num_classes, seed=seed, dropout=dropout)
    return net, train_childnet(net, g, train_cfg)
