"""
Dense vs block-sparse matvec timing.

Each (size, sparsity) cell builds a random square weight, prunes it with
``get_mask`` to the requested block sparsity, warms both paths up (this
also triggers JIT compilation) and reports the median of ``reps`` timed
calls. Timing is advisory: results are logged, never asserted.
"""

from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from collections.abc import Callable, Sequence
from dataclasses import astuple, dataclass

import numpy as np

from dsnn.pruning.masks import get_mask
from dsnn.sparse.bsr import bsr_matvec, from_masked_dense

logger = logging.getLogger("dsnn.bench")

BENCH_FIELDS = ("size", "sparsity", "dense_ns", "sparse_ns", "ratio")
MIN_REPS = 100

# Advisory targets, logged when missed.
TARGET_SPEEDUP = 2.0
TARGET_SIZE = 1024
TARGET_SPARSITY = 0.9
NOISE_BAND = 0.10


@dataclass(frozen=True)
class BenchRow:
    size: int
    sparsity: float
    dense_ns: float
    sparse_ns: float
    ratio: float


def _median_ns(fn: Callable[[], object], reps: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return float(statistics.median(samples))


def bench_speedup(
    sizes: Sequence[int],
    sparsities: Sequence[float],
    block_height: int = 16,
    reps: int = MIN_REPS,
    warmup: int = 10,
    seed: int = 0,
) -> list[BenchRow]:
    if reps < MIN_REPS:
        raise ValueError(f"reps must be >= {MIN_REPS}, got {reps}")
    rng = np.random.Generator(np.random.PCG64(seed))
    rows: list[BenchRow] = []
    for size in sizes:
        w = rng.standard_normal((size, size))
        x = rng.standard_normal(size)
        # Random scores so the pruned blocks are scattered.
        g = rng.standard_normal((size, size))
        for s in sparsities:
            mask = get_mask(w, g, s, block_height)
            a = from_masked_dense(w, mask)
            wm = np.where(mask.to_array(), w, 0.0)
            dense_ns = _median_ns(lambda wm=wm: wm @ x, reps, warmup)
            sparse_ns = _median_ns(lambda a=a: bsr_matvec(a, x), reps, warmup)
            row = BenchRow(size, s, dense_ns, sparse_ns, dense_ns / sparse_ns if sparse_ns else float("inf"))
            logger.info(f"bench size={size} S={s:.2f}: dense {dense_ns:.0f} ns, sparse {sparse_ns:.0f} ns, x{row.ratio:.2f}")
            rows.append(row)
    check_advisory(rows)
    return rows


def check_advisory(rows: Sequence[BenchRow]) -> list[str]:
    """Warnings for missed speedup targets; empty when all targets hold."""
    warnings: list[str] = []
    for r in rows:
        if r.size == TARGET_SIZE and abs(r.sparsity - TARGET_SPARSITY) < 1e-9 and r.ratio < TARGET_SPEEDUP:
            warnings.append(f"speedup x{r.ratio:.2f} at size {r.size}, S={r.sparsity} is below x{TARGET_SPEEDUP}")
    for size in sorted({r.size for r in rows}):
        series = sorted((r for r in rows if r.size == size), key=lambda r: r.sparsity)
        for prev, cur in zip(series, series[1:], strict=False):
            if cur.ratio < prev.ratio * (1.0 - NOISE_BAND):
                warnings.append(
                    f"speedup not monotone at size {size}: x{prev.ratio:.2f} at S={prev.sparsity} "
                    f"-> x{cur.ratio:.2f} at S={cur.sparsity}"
                )
    for w in warnings:
        logger.warning(w)
    return warnings


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_FIELDS)
    for r in rows:
        writer.writerow(astuple(r))
    return buf.getvalue()
