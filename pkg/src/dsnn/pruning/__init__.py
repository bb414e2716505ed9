"""Masks, block scoring, sparsity plans and the cubic ramp."""

from .masks import (
    BinaryMask,
    apply_mask,
    block_scores,
    get_mask,
    mask_union,
    snn_structured_mask,
    snn_thresholds,
)
from .plan import SparsityConfig, SparsityPlan
from .schedule import PruneSchedule, cubic_sparsity

__all__ = [
    "BinaryMask",
    "apply_mask",
    "block_scores",
    "get_mask",
    "mask_union",
    "snn_structured_mask",
    "snn_thresholds",
    "SparsityConfig",
    "SparsityPlan",
    "PruneSchedule",
    "cubic_sparsity",
]
