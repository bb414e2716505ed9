"""
LSTM sequence classifier with a linear projection.

    tokens --one-hot--> [lstm0] -> ... -> [lstm{k-1}] --h_T--> lstm_proj --> fc0 --> logits

Each cell packs its four gate matrices into one weight of shape
(4H, input + H), rows ordered input, forget, cell, output. The state
(h, c) starts at zero for every sequence.
"""

from __future__ import annotations

from typing import Any, ClassVar

import numpy as np
import numpy.typing as npt

from dsnn.core.autodiff import (
    Node,
    add,
    add_bias,
    concat,
    constant,
    matmul,
    mul,
    sigmoid,
    slice_cols,
    tanh,
    transpose,
)
from dsnn.errors import ShapeError
from dsnn.models.base import Model, WeightView

GATES = ("input", "forget", "cell", "output")


class LstmModel(Model):
    kind: ClassVar[str] = "lstm"

    def __init__(
        self,
        vocab: int,
        hidden: int,
        projection: int,
        classes: int,
        layers: int = 1,
        forget_bias: float = 1.0,
        seed: int = 0,
        min_prune_size: int = 0,
    ):
        super().__init__(min_prune_size)
        if vocab < 2 or hidden < 1 or projection < 1 or classes < 2 or layers < 1:
            raise ValueError(
                f"invalid LSTM dims: vocab={vocab} hidden={hidden} projection={projection} "
                f"classes={classes} layers={layers}"
            )
        self.vocab = vocab
        self.hidden = hidden
        self.projection = projection
        self.classes = classes
        self.layers = layers
        self.forget_bias = forget_bias
        self.seed = seed
        rng = np.random.Generator(np.random.PCG64(seed))
        for layer in range(layers):
            fan_in = (vocab if layer == 0 else hidden) + hidden
            self._register(f"lstm{layer}.w", self._glorot(rng, 4 * hidden, fan_in))
            b = np.zeros(4 * hidden)
            b[hidden : 2 * hidden] = forget_bias
            self._register(f"lstm{layer}.b", b)
        self._register("lstm_proj.w", self._glorot(rng, projection, hidden))
        self._register("fc0.w", self._glorot(rng, classes, projection))
        self._register("fc0.b", np.zeros(classes))

    def spec(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "vocab": self.vocab,
            "hidden": self.hidden,
            "projection": self.projection,
            "classes": self.classes,
            "layers": self.layers,
            "forget_bias": self.forget_bias,
            "seed": self.seed,
            "min_prune_size": self.min_prune_size,
        }

    def layer_groups(self) -> dict[str, list[str]]:
        return {"hidden": ["lstm*"], "output": ["fc*"]}

    def one_hot(self, tokens: npt.NDArray) -> list[npt.NDArray[np.float64]]:
        """Per-timestep one-hot inputs, each (n, vocab)."""
        t = np.asarray(tokens)
        if t.ndim != 2:
            raise ShapeError("lstm.forward", "(n, seq_len) token ids", t.shape)
        if t.size and (t.min() < 0 or t.max() >= self.vocab):
            raise ValueError(f"token ids must be in [0, {self.vocab}), got range [{t.min()}, {t.max()}]")
        eye = np.eye(self.vocab)
        return [eye[t[:, step]] for step in range(t.shape[1])]

    def cell(self, x: Node, h: Node, c: Node, w_t: Node, b: Node) -> tuple[Node, Node]:
        """One timestep. ``w_t`` is the transposed gate matrix."""
        hs = self.hidden
        z = add_bias(matmul(concat([x, h], axis=1), w_t), b)
        i = sigmoid(slice_cols(z, 0, hs))
        f = sigmoid(slice_cols(z, hs, 2 * hs))
        g = tanh(slice_cols(z, 2 * hs, 3 * hs))
        o = sigmoid(slice_cols(z, 3 * hs, 4 * hs))
        c = add(mul(f, c), mul(i, g))
        h = mul(o, tanh(c))
        return h, c

    def forward(self, inputs: npt.NDArray, weights: WeightView) -> Node:
        steps: list[Node] = [constant(x) for x in self.one_hot(inputs)]
        n = steps[0].shape[0]
        for layer in range(self.layers):
            w_t = transpose(weights[f"lstm{layer}.w"])
            b = weights[f"lstm{layer}.b"]
            h = constant(np.zeros((n, self.hidden)))
            c = constant(np.zeros((n, self.hidden)))
            outputs: list[Node] = []
            for x in steps:
                h, c = self.cell(x, h, c, w_t, b)
                outputs.append(h)
            steps = outputs
        r = matmul(steps[-1], transpose(weights["lstm_proj.w"]))
        return add_bias(matmul(r, transpose(weights["fc0.w"])), weights["fc0.b"])
