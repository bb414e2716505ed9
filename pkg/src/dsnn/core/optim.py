"""
Optimizers and parameter averaging.

``adam_step`` is the standard bias-corrected Adam update applied in place;
``ema_update`` maintains the averaged weights used for evaluation.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from dsnn.core.autodiff import Tensor
from dsnn.errors import ShapeError


@dataclass
class AdamState:
    """Moment estimates and hyperparameters for one Adam run."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, Tensor] = field(default_factory=dict)
    v: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"Adam lr must be > 0, got {self.lr}")


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Tensor],
    state: AdamState,
    lr: float | None = None,
    update_masks: Mapping[str, Tensor] | None = None,
) -> None:
    """One Adam update, in place on ``params``.

    ``update_masks`` restricts the write to positions where the mask is
    nonzero; masked-out positions keep their exact previous bits.
    """
    lr = state.lr if lr is None else lr
    if lr <= 0:
        raise ValueError(f"Adam lr must be > 0, got {lr}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ShapeError("adam_step", value.shape, g.shape)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or v is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if update_masks is not None and name in update_masks:
            keep = update_masks[name] != 0
            value[keep] -= update[keep]
        else:
            value -= update


def ema_update(param: Tensor, shadow: Tensor, decay: float, where: Tensor | None = None) -> Tensor:
    """Return ``decay * shadow + (1 - decay) * param``.

    With ``where``, positions where it is zero keep the old shadow bits.
    """
    if not 0.0 < decay < 1.0:
        raise ValueError(f"EMA decay must be in (0, 1), got {decay}")
    if param.shape != shadow.shape:
        raise ShapeError("ema_update", shadow.shape, param.shape)
    new = shadow - (1.0 - decay) * (shadow - param)
    if where is not None:
        new = np.where(where != 0, new, shadow)
    return new


def effective_ema_decay(decay: float, num_updates: int) -> float:
    """Decay ramped by update count, so early shadows follow the weights."""
    return min(decay, (1.0 + num_updates) / (10.0 + num_updates))


def warmup_lr(base_lr: float, step: int, warmup_steps: int) -> float:
    """Linear ramp over ``warmup_steps``; constant afterwards."""
    if warmup_steps <= 0:
        return base_lr
    return base_lr * min(1.0, (step + 1) / warmup_steps)
