"""
Model base: named parameters and the weight view every forward pass reads.

A forward pass never touches ``Parameter.value`` directly. It asks a
``WeightView`` for each weight, and the view decides what the graph sees:
the raw trainable leaf, the masked weight ``N o M`` of a sparsity config,
the progressive-freezing split ``stop_gradient(N o M) + N o !M``, or the
EMA shadow for evaluation.
"""

from __future__ import annotations

import copy
from abc import ABC, abstractmethod
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np
import numpy.typing as npt

from dsnn.core.autodiff import Node, Tensor, add, stop_gradient
from dsnn.errors import ShapeError
from dsnn.pruning.masks import BinaryMask, apply_mask


@dataclass(eq=False)
class Parameter:
    """A named trainable weight with its gradient accumulator and EMA shadow."""

    name: str
    value: Tensor
    prunable: bool = False
    grad: Tensor = field(init=False)
    ema: Tensor = field(init=False)

    def __post_init__(self) -> None:
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.ema = self.value.copy()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def node(self) -> Node:
        """A fresh graph leaf whose gradient accumulates into ``self.grad``."""
        return Node(self.value, op=f"param:{self.name}", requires_grad=True, param=self)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)


class WeightView:
    """Resolves parameter names to graph nodes for one forward pass."""

    def __init__(
        self,
        model: Model,
        masks: Mapping[str, BinaryMask] | None = None,
        frozen: Mapping[str, BinaryMask] | None = None,
        use_ema: bool = False,
    ):
        self.model = model
        self.masks = masks or {}
        self.frozen = frozen or {}
        self.use_ema = use_ema
        self._cache: dict[str, Node] = {}

    def __getitem__(self, name: str) -> Node:
        if name not in self._cache:
            self._cache[name] = self._resolve(name)
        return self._cache[name]

    def _resolve(self, name: str) -> Node:
        p = self.model.parameters[name]
        leaf = Node(p.ema, op=f"ema:{name}") if self.use_ema else p.node()
        if name in self.frozen:
            m = self.frozen[name]
            return add(stop_gradient(apply_mask(leaf, m)), apply_mask(leaf, m.invert()))
        if name in self.masks:
            return apply_mask(leaf, self.masks[name])
        return leaf


class Model(ABC):
    """Base class for the toy models."""

    kind: ClassVar[str] = "base"

    def __init__(self, min_prune_size: int = 0):
        self.min_prune_size = min_prune_size
        self.parameters: dict[str, Parameter] = {}

    # --- registration ---

    def _register(self, name: str, value: Tensor) -> Parameter:
        if name in self.parameters:
            raise ValueError(f"duplicate parameter name '{name}'")
        prunable = value.ndim == 2 and value.size >= self.min_prune_size
        p = Parameter(name, value, prunable=prunable)
        self.parameters[name] = p
        return p

    @staticmethod
    def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> Tensor:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    # --- queries ---

    @property
    def prunable(self) -> list[str]:
        return [n for n, p in self.parameters.items() if p.prunable]

    def weight_sizes(self) -> dict[str, int]:
        return {n: self.parameters[n].size for n in self.prunable}

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters.values())

    @abstractmethod
    def spec(self) -> dict[str, Any]:
        """Constructor arguments, enough to rebuild the architecture."""

    @abstractmethod
    def layer_groups(self) -> dict[str, list[str]]:
        """Weight-name patterns per layer class: ``hidden`` and ``output``."""

    @abstractmethod
    def forward(self, inputs: npt.NDArray, weights: WeightView) -> Node:
        """Logits for a batch."""

    # --- forward helpers ---

    def logits(
        self,
        inputs: npt.NDArray,
        masks: Mapping[str, BinaryMask] | None = None,
        frozen: Mapping[str, BinaryMask] | None = None,
        use_ema: bool = False,
    ) -> Node:
        return self.forward(inputs, WeightView(self, masks, frozen, use_ema))

    # --- state ---

    def zero_grad(self) -> None:
        for p in self.parameters.values():
            p.zero_grad()

    def grads(self) -> dict[str, Tensor]:
        return {n: p.grad for n, p in self.parameters.items()}

    def values(self) -> dict[str, Tensor]:
        return {n: p.value for n, p in self.parameters.items()}

    def load_values(self, values: Mapping[str, Tensor], ema: Mapping[str, Tensor] | None = None) -> None:
        for name, p in self.parameters.items():
            v = np.asarray(values[name], dtype=np.float64)
            if v.shape != p.shape:
                raise ShapeError(f"load:{name}", p.shape, v.shape)
            p.value = v.copy()
            p.ema = np.asarray(ema[name], dtype=np.float64).copy() if ema is not None else v.copy()
            p.zero_grad()

    def clone(self) -> Model:
        return copy.deepcopy(self)
