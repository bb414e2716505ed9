"""Fully-connected classifier: ReLU hidden layers, linear output."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Any, ClassVar

import numpy as np
import numpy.typing as npt

from dsnn.core.autodiff import Node, add_bias, constant, matmul, relu, transpose
from dsnn.errors import ShapeError
from dsnn.models.base import Model, WeightView


class MlpModel(Model):
    """Layers ``fc0 .. fc{k-1}``; weights are stored (out, in)."""

    kind: ClassVar[str] = "mlp"

    def __init__(
        self,
        input_dim: int,
        hidden: Sequence[int],
        classes: int,
        seed: int = 0,
        min_prune_size: int = 0,
    ):
        super().__init__(min_prune_size)
        if input_dim < 1 or classes < 2 or any(h < 1 for h in hidden):
            raise ValueError(f"invalid MLP dims: input={input_dim} hidden={list(hidden)} classes={classes}")
        self.input_dim = input_dim
        self.hidden = list(hidden)
        self.classes = classes
        self.seed = seed
        rng = np.random.Generator(np.random.PCG64(seed))
        dims = [input_dim, *self.hidden, classes]
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:], strict=True)):
            self._register(f"fc{i}.w", self._glorot(rng, fan_out, fan_in))
            self._register(f"fc{i}.b", np.zeros(fan_out))

    @property
    def num_layers(self) -> int:
        return len(self.hidden) + 1

    def spec(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "classes": self.classes,
            "seed": self.seed,
            "min_prune_size": self.min_prune_size,
        }

    def layer_groups(self) -> dict[str, list[str]]:
        last = self.num_layers - 1
        return {
            "hidden": [f"fc{i}.w" for i in range(last)],
            "output": [f"fc{last}.w"],
        }

    def forward(self, inputs: npt.NDArray, weights: WeightView) -> Node:
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError("mlp.forward", f"(n, {self.input_dim})", x.shape)
        h = constant(x)
        for i in range(self.num_layers):
            h = add_bias(matmul(h, transpose(weights[f"fc{i}.w"])), weights[f"fc{i}.b"])
            if i < self.num_layers - 1:
                h = relu(h)
        return h
