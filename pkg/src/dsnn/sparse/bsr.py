"""
Block-CSR storage for R x 1 block-pruned weights and its matvec kernel.

Each stored block is R consecutive rows of one column:

    block-row br covers rows  br*R .. br*R+R-1
    indptr[br] .. indptr[br+1]   blocks kept in that block-row
    indices[k]                   column of block k (ascending within a block-row)
    values[k, :]                 its R entries, top to bottom

When R does not divide the row count the last block-row is partial; its
blocks are zero-padded in ``values`` and the padding is never written to
the output.

``bsr_matvec`` runs one block-row per worker and accumulates each output
segment in ascending column order, the same order as the column-sweep
reference ``masked_dense_matvec``, so both produce the same bits.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numba
import numpy as np
import numpy.typing as npt

from dsnn.core.autodiff import Tensor
from dsnn.errors import ShapeError
from dsnn.pruning.masks import BinaryMask, block_grid_shape

logger = logging.getLogger("dsnn.sparse")

_HEADER = struct.Struct("<4I")


def set_kernel_threads(threads: int | None) -> int:
    """Cap numba's worker count; returns the count in effect."""
    if threads is not None:
        if threads < 1:
            raise ValueError(f"thread count must be >= 1, got {threads}")
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return int(numba.get_num_threads())


@dataclass(frozen=True, eq=False)
class BlockCsrMatrix:
    rows: int
    cols: int
    block_height: int
    indptr: npt.NDArray[np.int64]
    indices: npt.NDArray[np.int64]
    values: npt.NDArray[np.floating]

    @property
    def block_rows(self) -> int:
        return int(self.indptr.shape[0] - 1)

    @property
    def nnzb(self) -> int:
        return int(self.indices.shape[0])

    def block_heights(self) -> npt.NDArray[np.int64]:
        """Real (unpadded) height of every stored block."""
        per_row = np.minimum(self.block_height, self.rows - self.block_height * np.arange(self.block_rows))
        return np.repeat(per_row, np.diff(self.indptr))

    @property
    def stored_values(self) -> int:
        """Entries stored, excluding padding of a partial last block-row."""
        return int(self.block_heights().sum())

    def to_dense(self) -> Tensor:
        out = np.zeros((self.block_rows * self.block_height, self.cols))
        br = np.repeat(np.arange(self.block_rows), np.diff(self.indptr))
        out.reshape(self.block_rows, self.block_height, self.cols)[br, :, self.indices] = self.values
        return out[: self.rows]

    # --- serialization ---

    def to_bytes(self) -> bytes:
        """Header (rows, cols, R, block count) + indptr + indices (uint32) + values (float64)."""
        return b"".join([
            _HEADER.pack(self.rows, self.cols, self.block_height, self.nnzb),
            self.indptr.astype("<u4").tobytes(),
            self.indices.astype("<u4").tobytes(),
            self.values.astype("<f8").tobytes(),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> BlockCsrMatrix:
        rows, cols, r, nnzb = _HEADER.unpack_from(data, 0)
        nbr = -(-rows // r)
        offset = _HEADER.size
        expected = offset + 4 * (nbr + 1) + 4 * nnzb + 8 * nnzb * r
        if len(data) != expected:
            raise ValueError(f"block-CSR payload is {len(data)} bytes, expected {expected}")
        indptr = np.frombuffer(data, dtype="<u4", count=nbr + 1, offset=offset).astype(np.int64)
        offset += 4 * (nbr + 1)
        indices = np.frombuffer(data, dtype="<u4", count=nnzb, offset=offset).astype(np.int64)
        offset += 4 * nnzb
        values = np.frombuffer(data, dtype="<f8", count=nnzb * r, offset=offset).reshape(nnzb, r).astype(np.float64)
        return cls(rows, cols, r, indptr, indices, values)


def from_masked_dense(
    weight: Tensor,
    mask: BinaryMask,
    block_height: int | None = None,
    dtype: npt.DTypeLike = np.float64,
) -> BlockCsrMatrix:
    """Pack the kept R x 1 blocks of ``weight * mask``."""
    w = np.asarray(weight, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError("from_masked_dense", "2-D weight", w.shape)
    if mask.shape != w.shape:
        raise ShapeError("from_masked_dense", w.shape, mask.shape)
    r = mask.block_height if block_height is None else block_height
    keep = mask.to_array()
    # Re-validates alignment at r; raises MaskAlignmentError.
    aligned = BinaryMask.from_array(keep, r)
    m, n = w.shape
    nbr, _ = block_grid_shape(w.shape, r)
    block_keep = aligned.block_keep()
    padded = np.zeros((nbr * r, n))
    padded[:m] = np.where(keep, w, 0.0)
    br, cols = np.nonzero(block_keep)
    values = padded.reshape(nbr, r, n)[br, :, cols].astype(dtype)
    indptr = np.concatenate([[0], np.cumsum(block_keep.sum(axis=1))]).astype(np.int64)
    return BlockCsrMatrix(m, n, r, indptr, cols.astype(np.int64), values)


@numba.njit(parallel=True)
def _bsr_matvec_kernel(indptr, indices, values, x, rows, r, out):  # type: ignore[no-untyped-def]
    nbr = indptr.shape[0] - 1
    for br in numba.prange(nbr):
        r0 = br * r
        h = min(r, rows - r0)
        acc = np.zeros(r)
        for k in range(indptr[br], indptr[br + 1]):
            xj = x[indices[k]]
            for i in range(h):
                acc[i] += values[k, i] * xj
        for i in range(h):
            out[r0 + i] = acc[i]


def bsr_matvec(a: BlockCsrMatrix, x: npt.ArrayLike) -> Tensor:
    """y = (W o M) x, accumulated in float64."""
    xv = np.ascontiguousarray(x, dtype=np.float64)
    if xv.ndim != 1 or xv.shape[0] != a.cols:
        raise ShapeError("bsr_matvec", (a.cols,), xv.shape)
    out = np.zeros(a.rows)
    _bsr_matvec_kernel(a.indptr, a.indices, a.values, xv, a.rows, a.block_height, out)
    return out


def masked_dense_matvec(weight: Tensor, mask: BinaryMask, x: npt.ArrayLike) -> Tensor:
    """Reference: column sweep over ``weight * mask`` in ascending column order."""
    xv = np.asarray(x, dtype=np.float64)
    if weight.ndim != 2 or xv.shape != (weight.shape[1],):
        raise ShapeError("masked_dense_matvec", (weight.shape[1],), xv.shape)
    wm = np.where(mask.to_array(), weight, 0.0)
    y = np.zeros(weight.shape[0])
    for j in range(weight.shape[1]):
        y += wm[:, j] * xv[j]
    return y
