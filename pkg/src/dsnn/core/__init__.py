"""Dense tensors, reverse-mode autodiff, Adam and EMA."""

from .autodiff import (
    Node,
    Tensor,
    add,
    add_bias,
    backward,
    concat,
    constant,
    elementwise,
    matmul,
    mul,
    relu,
    sigmoid,
    slice_cols,
    softmax,
    softmax_cross_entropy,
    stop_gradient,
    sum_all,
    tanh,
    transpose,
    variable,
)
from .optim import AdamState, adam_step, effective_ema_decay, ema_update, warmup_lr

__all__ = [
    "Node",
    "Tensor",
    "add",
    "add_bias",
    "backward",
    "concat",
    "constant",
    "elementwise",
    "matmul",
    "mul",
    "relu",
    "sigmoid",
    "slice_cols",
    "softmax",
    "softmax_cross_entropy",
    "stop_gradient",
    "sum_all",
    "tanh",
    "transpose",
    "variable",
    "AdamState",
    "adam_step",
    "effective_ema_decay",
    "ema_update",
    "warmup_lr",
]
