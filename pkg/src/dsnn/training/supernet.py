"""
SuperNetwork: one weight set plus a mask table per sparsity configuration.

    masks[config][weight]   BinaryMask for every prunable weight
    score_grads[weight]     grad[W] kept from the previous step, used to score blocks

The first configuration of the plan is the full model and its masks are
all ones.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from dsnn.core.autodiff import Tensor
from dsnn.models.base import Model
from dsnn.pruning.masks import BinaryMask
from dsnn.pruning.plan import SparsityConfig, SparsityPlan
from dsnn.training.metrics import StepRecord

logger = logging.getLogger("dsnn.supernet")

VARIANTS = ("pretrain", "dsnn", "single", "snn")


@dataclass
class SuperNetwork:
    model: Model
    plan: SparsityPlan
    block_height: int
    masks: dict[str, dict[str, BinaryMask]]
    score_grads: dict[str, Tensor]
    variant: str = "pretrain"
    label: str = ""
    step: int = 0
    ema_updates: int = 0
    trained_configs: list[str] = field(default_factory=list)
    history: list[StepRecord] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        model: Model,
        plan: SparsityPlan,
        block_height: int,
        variant: str = "pretrain",
        label: str = "",
    ) -> SuperNetwork:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if block_height < 1:
            raise ValueError(f"block height must be >= 1, got {block_height}")
        plan.validate_for(model.prunable)
        masks = {
            c.name: {w: BinaryMask.ones(model.parameters[w].shape, block_height) for w in model.prunable}
            for c in plan.configs
        }
        grads = {w: np.zeros_like(model.parameters[w].value) for w in model.prunable}
        return cls(model, plan, block_height, masks, grads, variant=variant, label=label or variant)

    # --- lookups ---

    def config(self, name: str) -> SparsityConfig:
        return self.plan.get(name)

    def masks_for(self, name: str) -> dict[str, BinaryMask]:
        self.plan.get(name)
        return self.masks[name]

    def sparse_order(self) -> list[SparsityConfig]:
        """Sparse configs by ascending average target sparsity."""
        return self.plan.ordered_sparse(self.model.weight_sizes())

    # --- reporting ---

    def realized_sparsity(self, name: str) -> dict[str, float]:
        return {w: m.sparsity for w, m in self.masks_for(name).items()}

    def average_sparsity(self, name: str) -> float:
        """Parameter-weighted realized sparsity over prunable weights."""
        masks = self.masks_for(name)
        total = sum(m.size for m in masks.values())
        if total == 0:
            return 0.0
        return sum(m.size - m.kept for m in masks.values()) / total

    def effective_parameters(self, name: str) -> int:
        """Kept prunable entries plus every non-prunable entry."""
        masks = self.masks_for(name)
        pruned = sum(m.size - m.kept for m in masks.values())
        return self.model.num_parameters() - pruned

    def set_masks(self, name: str, masks: Mapping[str, BinaryMask]) -> None:
        self.masks_for(name).update(masks)
