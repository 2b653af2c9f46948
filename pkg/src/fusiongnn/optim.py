"""First-order optimizers with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, UsageError
from .tensor import Value


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 0.005
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adam", "adagrad"):
            raise UsageError(f"unknown optimizer '{self.kind}'")
        if self.kind == "adagrad" and self.eps == 1e-8:
            self.eps = 1e-10


def make_optimizer(kind="adam", lr=0.005, weight_decay=0.0) -> OptimizerState:
    return OptimizerState(kind=kind, lr=lr, weight_decay=weight_decay)


def optimizer_step(state: OptimizerState, params: list[Value], grads: dict[int, np.ndarray]):
    """Update ``params`` in place from ``grads`` (keyed by Value id).

    Parameters missing from ``grads`` are treated as having zero gradient.
    Weight decay is decoupled: ``p -= lr * weight_decay * p`` before the
    adaptive step.
    """
    state.step_count += 1
    t = state.step_count
    for p in params:
        g = grads.get(p.id)
        if g is None:
            g = np.zeros(p.shape)
        elif g.shape != p.shape:
            raise DimensionError(f"gradient {g.shape} for parameter {p.shape}")
        slot = state.moments.get(p.id)
        if state.weight_decay:
            p.data -= state.lr * state.weight_decay * p.data
        if state.kind == "adam":
            if slot is None:
                slot = state.moments[p.id] = [np.zeros(p.shape), np.zeros(p.shape)]
            m, v = slot
            m *= state.beta1
            m += (1 - state.beta1) * g
            v *= state.beta2
            v += (1 - state.beta2) * g * g
            m_hat = m / (1 - state.beta1 ** t)
            v_hat = v / (1 - state.beta2 ** t)
            p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        else:
            if slot is None:
                slot = state.moments[p.id] = [np.zeros(p.shape)]
            acc = slot[0]
            acc += g * g
            p.data -= state.lr * g / (np.sqrt(acc) + state.eps)
    return params
