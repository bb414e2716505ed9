"""
Synthetic datasets: Gaussian clusters for the MLP and symbol-count
sequences for the LSTM.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``. The
generators use only integer draws, uniform/normal draws and elementwise
arithmetic (no LAPACK), so a seed yields the same bits on every platform
numpy supports.

Gaussian clusters
    Class means are the vertices of a regular simplex built from the
    Helmert basis, scaled to the unit sphere, then scattered across the
    ``dim`` coordinates by a seeded signed permutation. A sample is its
    class mean plus ``noise * N(0, I)``.

Symbol count
    The label is drawn first, then a count k of token 0 with
    k mod classes == label, uniform over the admissible counts. Token 0 is
    placed at k random positions; the rest are uniform over 1 .. vocab-1.
    Labels are uniform by construction and depend on the whole sequence.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt

logger = logging.getLogger("dsnn.data")

TaskKind = Literal["clusters", "symbol-count"]
TASKS: tuple[str, ...] = ("clusters", "symbol-count")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Batch:
    inputs: npt.NDArray
    labels: npt.NDArray[np.int64]

    def __len__(self) -> int:
        return int(self.labels.shape[0])


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """A generated sample with its provenance."""

    kind: TaskKind
    seed: int
    inputs: npt.NDArray
    labels: npt.NDArray[np.int64]
    classes: int
    noise: float = 0.0

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __post_init__(self) -> None:
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")

    def subset(self, indices: npt.NDArray[np.intp]) -> SyntheticDataset:
        return SyntheticDataset(
            self.kind, self.seed, self.inputs[indices], self.labels[indices], self.classes, self.noise
        )

    def split(self, n_eval: int) -> tuple[SyntheticDataset, SyntheticDataset]:
        """(train, eval) with disjoint sample indices; eval is the tail."""
        if not 0 < n_eval < len(self):
            raise ValueError(f"n_eval must be in (0, {len(self)}), got {n_eval}")
        cut = len(self) - n_eval
        idx = np.arange(len(self))
        return self.subset(idx[:cut]), self.subset(idx[cut:])

    def as_batch(self) -> Batch:
        return Batch(self.inputs, self.labels)

    def batches(self, batch_size: int, seed: int) -> Iterator[Batch]:
        """Endless mini-batches; each epoch is a fresh seeded permutation."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        rng = _rng(seed)
        n = len(self)
        while True:
            order = rng.permutation(n)
            for start in range(0, n - batch_size + 1, batch_size):
                idx = order[start : start + batch_size]
                yield Batch(self.inputs[idx], self.labels[idx])
            if batch_size > n:
                yield Batch(self.inputs[order], self.labels[order])

    def label_counts(self) -> npt.NDArray[np.int64]:
        return np.bincount(self.labels, minlength=self.classes)

    # --- debugging dumps ---

    def to_csv(self, features_path: Path, labels_path: Path) -> None:
        fmt = "%d" if self.kind == "symbol-count" else "%.17g"
        np.savetxt(features_path, self.inputs, fmt=fmt, delimiter=",")
        labels_path.write_text("".join(f"{int(y)}\n" for y in self.labels))
        logger.debug(f"Wrote {len(self)} samples to {features_path} / {labels_path}")

    @classmethod
    def from_csv(
        cls,
        features_path: Path,
        labels_path: Path,
        kind: TaskKind,
        classes: int,
        seed: int = 0,
        noise: float = 0.0,
    ) -> SyntheticDataset:
        dtype = np.int64 if kind == "symbol-count" else np.float64
        inputs = np.loadtxt(features_path, delimiter=",", dtype=dtype, ndmin=2)
        labels = np.array([int(s) for s in labels_path.read_text().split()], dtype=np.int64)
        return cls(kind, seed, inputs, labels, classes, noise)


# ---------------------------------------------------------------------------
# Gaussian clusters
# ---------------------------------------------------------------------------

def simplex_means(classes: int, dim: int) -> npt.NDArray[np.float64]:
    """Unit-norm regular-simplex vertices in the first ``classes - 1`` coordinates."""
    if classes < 2:
        raise ValueError(f"classes must be >= 2, got {classes}")
    if dim < classes - 1:
        raise ValueError(f"dim={dim} cannot hold {classes} separable means (need dim >= {classes - 1})")
    means = np.zeros((classes, dim))
    for j in range(1, classes):
        # Helmert row j: j ones, then -j, scaled to unit length.
        col = np.zeros(classes)
        col[:j] = 1.0
        col[j] = -float(j)
        means[:, j - 1] = col / np.sqrt(j * (j + 1))
    return means / np.linalg.norm(means, axis=1, keepdims=True)


def gen_gaussian_clusters(seed: int, n: int, classes: int, dim: int, noise: float) -> SyntheticDataset:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    base = simplex_means(classes, dim)
    rng = _rng(seed)
    perm = rng.permutation(dim)
    signs = rng.choice(np.array([-1.0, 1.0]), size=dim)
    means = np.zeros_like(base)
    means[:, perm] = base * signs
    labels = rng.integers(0, classes, size=n).astype(np.int64)
    inputs = means[labels] + noise * rng.standard_normal((n, dim))
    return SyntheticDataset("clusters", seed, inputs, labels, classes, noise)


def nearest_mean_accuracy(dataset: SyntheticDataset) -> float:
    """Accuracy of the classifier that predicts the closest empirical class mean."""
    x, y = dataset.inputs, dataset.labels
    present = [c for c in range(dataset.classes) if np.any(y == c)]
    centers = np.stack([x[y == c].mean(axis=0) for c in present])
    d = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    pred = np.asarray(present)[d.argmin(axis=1)]
    return float((pred == y).mean())


# ---------------------------------------------------------------------------
# Symbol count
# ---------------------------------------------------------------------------

def symbol_count_label(sequence: npt.ArrayLike, classes: int) -> int:
    return int(np.count_nonzero(np.asarray(sequence) == 0) % classes)


def gen_symbol_count(seed: int, n: int, seq_len: int, vocab: int, classes: int = 3) -> SyntheticDataset:
    if seq_len < 2 or vocab < 2:
        raise ValueError(f"need seq_len >= 2 and vocab >= 2, got seq_len={seq_len} vocab={vocab}")
    if classes < 2 or classes > seq_len + 1:
        raise ValueError(f"classes must be in [2, seq_len + 1], got {classes}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = _rng(seed)
    labels = rng.integers(0, classes, size=n).astype(np.int64)
    # Admissible counts for label y: y, y + classes, ... <= seq_len.
    options = (seq_len - labels) // classes + 1
    counts = labels + classes * np.floor(rng.random(n) * options).astype(np.int64)
    ranks = np.argsort(np.argsort(rng.random((n, seq_len)), axis=1, kind="stable"), axis=1, kind="stable")
    tokens = rng.integers(1, vocab, size=(n, seq_len)).astype(np.int64)
    tokens[ranks < counts[:, None]] = 0
    return SyntheticDataset("symbol-count", seed, tokens, labels, classes)


def generate(task: str, seed: int, n: int, **params: float | int) -> SyntheticDataset:
    """Dispatch by task name; ``params`` are the generator's keyword arguments."""
    if task == "clusters":
        return gen_gaussian_clusters(
            seed, n, int(params["classes"]), int(params["dim"]), float(params["noise"])
        )
    if task == "symbol-count":
        return gen_symbol_count(
            seed, n, int(params["seq_len"]), int(params["vocab"]), int(params["classes"])
        )
    raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
