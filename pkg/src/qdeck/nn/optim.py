"""AdamW with decoupled weight decay, global-norm clipping, step-decay LR."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(state: OptimizerState, params: dict[str, Tensor],
               grads: dict[str, np.ndarray] | None = None) -> OptimizerState:
    """One decoupled-weight-decay Adam update, in place on param values.

    Gradients default to each parameter's accumulated .grad; parameters
    with no gradient this step keep their value (moments untouched).
    """
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            continue
        if np.shape(g) != p.values.shape:
            raise ValueError(f"{name}: grad shape {np.shape(g)} != {p.values.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.values))
        v = state.v.setdefault(name, np.zeros_like(p.values))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p.values -= state.lr * state.weight_decay * p.values
        p.values -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm.

    Returns the scale that was applied (min(1, max_norm / norm)).
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    tensors = list(params.values()) if isinstance(params, dict) else list(params)
    sq = 0.0
    for p in tensors:
        if p.grad is not None:
            sq += float(np.sum(np.square(p.grad, dtype=np.float64)))
    norm = float(np.sqrt(sq))
    scale = min(1.0, max_norm / norm) if norm > 0 else 1.0
    if scale < 1.0:
        for p in tensors:
            if p.grad is not None:
                p.grad *= p.values.dtype.type(scale)
    return scale


@dataclass(frozen=True)
class StepDecaySchedule:
    """lr(epoch) = base_lr * gamma ** floor(epoch / step_size)."""

    base_lr: float
    step_size: int
    gamma: float = 0.5

    def __post_init__(self):
        if self.step_size < 1:
            raise ValueError(f"step_size must be >= 1, got {self.step_size}")

    def lr(self, epoch: int) -> float:
        return self.base_lr * self.gamma ** (epoch // self.step_size)
