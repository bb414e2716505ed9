"""
Binary masks and the scoring that produces them.

Blocks are R x 1: R consecutive rows of a single column. A weight of shape
(m, n) therefore has ceil(m / R) * n blocks, numbered row-major over the
block grid (block-row major, column minor). When R does not divide m the
last block-row is partial and is scored over the rows it actually has.

    column j
    +---+
    | b |  rows 0 .. R-1      block (0, j)
    | b |
    +---+
    | b |  rows R .. 2R-1     block (1, j)
    +---+

1-D weights are treated as a single column.
"""

from __future__ import annotations

import math
import struct
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from dsnn.core.autodiff import Node, Tensor, constant, mul
from dsnn.errors import MaskAlignmentError, ShapeError

_HEADER_WORD = struct.Struct("<I")


def _as_matrix(x: npt.NDArray, op: str) -> npt.NDArray:
    if x.ndim == 1:
        return x.reshape(-1, 1)
    if x.ndim == 2:
        return x
    raise ShapeError(op, "1-D or 2-D weight", x.shape)


def _check_block_height(block_height: int) -> None:
    if block_height <= 0:
        raise ValueError(f"block height must be positive, got {block_height}")


def block_grid_shape(shape: tuple[int, ...], block_height: int) -> tuple[int, int]:
    m, n = (shape[0], 1) if len(shape) == 1 else shape
    return (-(-m // block_height), n)


def _padded_blocks(x: npt.NDArray, block_height: int, mode: str) -> npt.NDArray:
    """View ``x`` (m x n) as (block_rows, R, n), padding the last block-row."""
    m, n = x.shape
    rows = block_grid_shape(x.shape, block_height)[0] * block_height
    if rows != m:
        pad = ((0, rows - m), (0, 0))
        x = np.pad(x, pad, mode="edge") if mode == "edge" else np.pad(x, pad)
    return x.reshape(-1, block_height, n)


def expand_blocks(block_keep: npt.NDArray[np.bool_], rows: int, block_height: int) -> npt.NDArray[np.bool_]:
    """Block grid (block_rows x n) -> element mask (rows x n)."""
    return np.repeat(block_keep, block_height, axis=0)[:rows]


def prune_count(sparsity: float, num_blocks: int) -> int:
    """Blocks zeroed for a target sparsity. Floor, so never over-prunes."""
    return math.floor(sparsity * num_blocks)


# ---------------------------------------------------------------------------
# BinaryMask
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BinaryMask:
    """Immutable bit-packed mask. 1 keeps a weight entry, 0 prunes it."""

    shape: tuple[int, ...]
    bits: bytes
    block_height: int = 1

    @classmethod
    def from_array(cls, keep: npt.ArrayLike, block_height: int = 1) -> BinaryMask:
        arr = np.asarray(keep).astype(bool)
        _check_block_height(block_height)
        if block_height > 1:
            blocks = _padded_blocks(_as_matrix(arr, "BinaryMask"), block_height, mode="edge")
            if not np.all(blocks == blocks[:, :1, :]):
                raise MaskAlignmentError(block_height, "entries within a block differ")
        packed = np.packbits(arr.ravel(), bitorder="little")
        return cls(shape=tuple(arr.shape), bits=packed.tobytes(), block_height=block_height)

    @classmethod
    def ones(cls, shape: tuple[int, ...], block_height: int = 1) -> BinaryMask:
        return cls.from_array(np.ones(shape, dtype=bool), block_height)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def to_array(self) -> npt.NDArray[np.bool_]:
        flat = np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8), count=self.size, bitorder="little")
        return flat.astype(bool).reshape(self.shape)

    def as_float(self) -> Tensor:
        return self.to_array().astype(np.float64)

    @property
    def kept(self) -> int:
        return int(self.to_array().sum())

    @property
    def sparsity(self) -> float:
        return (self.size - self.kept) / self.size

    @property
    def num_blocks(self) -> int:
        return math.prod(block_grid_shape(self.shape, self.block_height))

    def block_keep(self) -> npt.NDArray[np.bool_]:
        """Per-block keep flags on the block grid."""
        return _padded_blocks(_as_matrix(self.to_array(), "block_keep"), self.block_height, mode="edge")[:, 0, :]

    @property
    def zero_blocks(self) -> int:
        return int((~self.block_keep()).sum())

    def invert(self) -> BinaryMask:
        return BinaryMask.from_array(~self.to_array(), self.block_height)

    # --- serialization ---

    def to_bytes(self) -> bytes:
        """Header (ndim, dims..., block height; little-endian uint32) + packed bits.

        A matrix mask has a 16-byte header.
        """
        header = b"".join(_HEADER_WORD.pack(w) for w in (len(self.shape), *self.shape, self.block_height))
        return header + self.bits

    @classmethod
    def from_bytes(cls, data: bytes) -> BinaryMask:
        (ndim,) = _HEADER_WORD.unpack_from(data, 0)
        words = [_HEADER_WORD.unpack_from(data, 4 * (i + 1))[0] for i in range(ndim + 1)]
        shape, block_height = tuple(words[:ndim]), words[ndim]
        payload = data[4 * (ndim + 2):]
        expected = -(-math.prod(shape) // 8)
        if len(payload) != expected:
            raise ValueError(f"mask payload is {len(payload)} bytes, expected {expected}")
        return cls(shape=shape, bits=bytes(payload), block_height=block_height)


# ---------------------------------------------------------------------------
# Scoring and mask construction
# ---------------------------------------------------------------------------

def block_scores(weight: Tensor, grad: Tensor, block_height: int) -> Tensor:
    """Per-block L1 norm of weight * gradient, on the (block_rows x n) grid."""
    _check_block_height(block_height)
    if weight.shape != grad.shape:
        raise ShapeError("block_scores", weight.shape, grad.shape)
    saliency = _as_matrix(np.abs(weight * grad), "block_scores")
    return _padded_blocks(saliency, block_height, mode="zero").sum(axis=1)


def get_mask(weight: Tensor, grad: Tensor, sparsity: float, block_height: int) -> BinaryMask:
    """Zero the floor(S * B) lowest-scoring blocks.

    Equal scores are pruned lowest flat block index first, so masks at
    increasing sparsity are nested for a fixed (weight, grad).
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")
    scores = block_scores(weight, grad, block_height)
    k = prune_count(sparsity, scores.size)
    keep = np.ones(scores.size, dtype=bool)
    if k:
        keep[np.argsort(scores.ravel(), kind="stable")[:k]] = False
    rows = weight.shape[0]
    element_keep = expand_blocks(keep.reshape(scores.shape), rows, block_height)
    return BinaryMask.from_array(element_keep.reshape(weight.shape), block_height)


def apply_mask(weight: Node, mask: BinaryMask) -> Node:
    """``weight * mask``; masked entries get zero gradient."""
    if weight.shape != mask.shape:
        raise ShapeError("apply_mask", weight.shape, mask.shape)
    return mul(weight, constant(mask.as_float()))


def mask_union(masks: Sequence[BinaryMask]) -> BinaryMask:
    """Elementwise OR."""
    if not masks:
        raise ValueError("mask_union needs at least one mask")
    shape = masks[0].shape
    for m in masks[1:]:
        if m.shape != shape:
            raise ShapeError("mask_union", shape, m.shape)
    keep = np.logical_or.reduce([m.to_array() for m in masks])
    block_height = math.gcd(*(m.block_height for m in masks))
    return BinaryMask.from_array(keep, block_height)


# ---------------------------------------------------------------------------
# Structured (slimmable-style) mask
# ---------------------------------------------------------------------------

def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def snn_thresholds(shape: Sequence[int], sparsity: float) -> tuple[int, ...]:
    """Per-dimension kept extent T_d = round(N_d * (1 - S) ** (1 / D))."""
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")
    if not shape or any(n < 1 for n in shape):
        raise ShapeError("snn_structured_mask", "all dims >= 1", tuple(shape))
    factor = (1.0 - sparsity) ** (1.0 / len(shape))
    return tuple(_round_half_away(n * factor) for n in shape)


def snn_structured_mask(shape: Sequence[int], sparsity: float) -> BinaryMask:
    """Keep the leading T_d indices of every dimension; drop the trailing rows."""
    thresholds = snn_thresholds(shape, sparsity)
    keep = np.zeros(tuple(shape), dtype=bool)
    keep[tuple(slice(0, t) for t in thresholds)] = True
    return BinaryMask.from_array(keep)
