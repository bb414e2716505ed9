"""
Reverse-mode automatic differentiation over dense float64 arrays.

A ``Node`` holds a value, the rule that maps an upstream gradient onto its
parents, and (for parameter leaves) a back-reference to the ``Parameter``
whose accumulator receives the gradient. Graphs are built eagerly by the
op functions below and consumed once by ``backward``.

Broadcasting is limited to two cases: a 0-d scalar against any shape, and
equal shapes. ``add_bias`` covers the row-vector case dense layers need.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import TYPE_CHECKING, Literal

import numpy as np
import numpy.typing as npt

from dsnn.errors import NumericError, ShapeError

if TYPE_CHECKING:
    from dsnn.models.base import Parameter

Tensor = npt.NDArray[np.float64]
BackwardRule = Callable[[Tensor], Sequence[Tensor | None]]
ElementwiseOp = Literal["add", "mul", "sigmoid", "tanh", "relu"]

NORMALIZATION_TOLERANCE = 1e-9


def as_tensor(data: npt.ArrayLike) -> Tensor:
    """Coerce ``data`` to a float64 array with positive dimensions."""
    arr = np.asarray(data, dtype=np.float64)
    if any(d <= 0 for d in arr.shape):
        raise ShapeError("tensor", "positive dimensions", arr.shape)
    return arr


def _check_finite(op: str, value: Tensor) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericError(op)


# ---------------------------------------------------------------------------
# Graph node
# ---------------------------------------------------------------------------

class Node:
    """A value in the computation graph."""

    __slots__ = ("value", "grad", "parents", "backward_rule", "requires_grad", "op", "param")

    def __init__(
        self,
        value: Tensor,
        parents: tuple[Node, ...] = (),
        backward_rule: BackwardRule | None = None,
        op: str = "leaf",
        requires_grad: bool = False,
        param: Parameter | None = None,
    ):
        self.value = value
        self.grad: Tensor | None = None
        self.parents = parents
        self.backward_rule = backward_rule
        self.requires_grad = requires_grad
        self.op = op
        self.param = param

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __add__(self, other: Node) -> Node:
        return add(self, other)

    def __mul__(self, other: Node) -> Node:
        return mul(self, other)

    def __matmul__(self, other: Node) -> Node:
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"


def constant(value: npt.ArrayLike) -> Node:
    """A leaf that never receives gradient."""
    return Node(as_tensor(value), op="constant")


def variable(value: npt.ArrayLike) -> Node:
    """A free leaf whose gradient lands in ``node.grad`` after ``backward``."""
    return Node(as_tensor(value), op="variable", requires_grad=True)


def _make(op: str, value: Tensor, parents: tuple[Node, ...], rule: BackwardRule) -> Node:
    _check_finite(op, value)
    if not any(p.requires_grad for p in parents):
        return Node(value, op=op)
    return Node(value, parents, rule, op=op, requires_grad=True)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", f"[m x k] . [k x n] from {a.shape}", b.shape)
    av, bv = a.value, b.value
    return _make("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise ShapeError("transpose", "2-D", a.shape)
    return _make("transpose", a.value.T.copy(), (a,), lambda g: (g.T,))


def concat(nodes: Sequence[Node], axis: int = 1) -> Node:
    values = [n.value for n in nodes]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError as e:
        raise ShapeError("concat", "matching non-concat dims", [v.shape for v in values]) from e
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
    return _make("concat", out, tuple(nodes), lambda g: np.split(g, bounds, axis=axis))


def slice_cols(x: Node, start: int, stop: int) -> Node:
    if x.value.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise ShapeError("slice_cols", f"0 <= start < stop <= {x.shape[-1]}", (start, stop))
    shape = x.shape

    def rule(g: Tensor) -> tuple[Tensor]:
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _make("slice_cols", x.value[:, start:stop].copy(), (x,), rule)


def sum_all(x: Node) -> Node:
    shape = x.shape
    return _make("sum", np.asarray(x.value.sum()), (x,), lambda g: (np.full(shape, float(g)),))


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def _is_scalar(v: Tensor) -> bool:
    return v.ndim == 0


def _check_broadcast(op: str, a: Node, b: Node) -> None:
    if a.shape != b.shape and not (_is_scalar(a.value) or _is_scalar(b.value)):
        raise ShapeError(op, a.shape, b.shape)


def _unbroadcast(g: Tensor, like: Tensor) -> Tensor:
    return np.asarray(g.sum()) if _is_scalar(like) and not _is_scalar(g) else g


def add(a: Node, b: Node) -> Node:
    _check_broadcast("add", a, b)
    av, bv = a.value, b.value
    return _make("add", av + bv, (a, b), lambda g: (_unbroadcast(g, av), _unbroadcast(g, bv)))


def mul(a: Node, b: Node) -> Node:
    _check_broadcast("mul", a, b)
    av, bv = a.value, b.value
    return _make(
        "mul", av * bv, (a, b),
        lambda g: (_unbroadcast(g * bv, av), _unbroadcast(g * av, bv)),
    )


def add_bias(x: Node, b: Node) -> Node:
    """Row-broadcast add: ``x[n x m] + b[m]``."""
    if x.value.ndim != 2 or b.value.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError("add_bias", f"[n x m] + [m] from {x.shape}", b.shape)
    return _make("add_bias", x.value + b.value, (x, b), lambda g: (g, g.sum(axis=0)))


def sigmoid(x: Node) -> Node:
    # Split by sign so exp never overflows.
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return _make("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Node) -> Node:
    out = np.tanh(x.value)
    return _make("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x: Node) -> Node:
    active = x.value > 0
    return _make("relu", np.where(active, x.value, 0.0), (x,), lambda g: (g * active,))


_BINARY: dict[str, Callable[[Node, Node], Node]] = {"add": add, "mul": mul}
_UNARY: dict[str, Callable[[Node], Node]] = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def elementwise(op: ElementwiseOp, *args: Node) -> Node:
    """Dispatch an elementwise op by name."""
    if op in _BINARY and len(args) == 2:
        return _BINARY[op](*args)
    if op in _UNARY and len(args) == 1:
        return _UNARY[op](*args)
    raise ValueError(f"unsupported elementwise op {op!r} with {len(args)} operand(s)")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def softmax(z: Tensor) -> Tensor:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: Tensor) -> Tensor:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: Node, target_probs: Tensor | Node) -> Node:
    """Mean over rows of ``-sum(target * log_softmax(logits))``.

    The target is always treated as a constant; pass one-hot rows for
    ground-truth loss or teacher probabilities for distillation.
    """
    target = target_probs.value if isinstance(target_probs, Node) else as_tensor(target_probs)
    z = logits.value
    if z.ndim != 2 or target.shape != z.shape:
        raise ShapeError("softmax_cross_entropy", z.shape, target.shape)
    if z.shape[1] < 2:
        raise ShapeError("softmax_cross_entropy", "c >= 2 classes", z.shape)
    row_sums = target.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > NORMALIZATION_TOLERANCE):
        raise NumericError("softmax_cross_entropy", "target rows must each sum to 1")
    n = z.shape[0]
    loss = -(target * log_softmax(z)).sum() / n
    probs = softmax(z)
    return _make(
        "softmax_cross_entropy", np.asarray(loss), (logits,),
        lambda g: (float(g) * (probs - target) / n,),
    )


# ---------------------------------------------------------------------------
# Gradient barrier and backward pass
# ---------------------------------------------------------------------------

def stop_gradient(x: Node) -> Node:
    """Same forward value; contributes nothing to the ancestors of ``x``."""
    return Node(x.value, op="stop_gradient")


def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> None:
    """Propagate d(loss)/d(node) through the graph.

    Each node's ``grad`` is set to its total gradient; parameter leaves also
    add it into ``Parameter.grad`` so repeated calls accumulate.
    """
    if loss.value.size != 1:
        raise ShapeError("backward", "scalar loss", loss.shape)
    if not loss.requires_grad:
        return
    pending: dict[int, Tensor] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topological_order(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        if node.param is not None:
            node.param.grad += g
        if node.backward_rule is None:
            continue
        for parent, pg in zip(node.parents, node.backward_rule(g), strict=True):
            if pg is None or not parent.requires_grad:
                continue
            _check_finite(f"{node.op}.backward", pg)
            key = id(parent)
            pending[key] = pending[key] + pg if key in pending else pg
