"""Seeded synthetic datasets."""

from .synthetic import (
    TASKS,
    Batch,
    SyntheticDataset,
    gen_gaussian_clusters,
    gen_symbol_count,
    generate,
    nearest_mean_accuracy,
    simplex_means,
    symbol_count_label,
)

__all__ = [
    "TASKS",
    "Batch",
    "SyntheticDataset",
    "gen_gaussian_clusters",
    "gen_symbol_count",
    "generate",
    "nearest_mean_accuracy",
    "simplex_means",
    "symbol_count_label",
]
