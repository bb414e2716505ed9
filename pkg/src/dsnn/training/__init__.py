"""Trainers, the super-network, losses and training metrics."""

from .losses import accuracy, distillation_loss, ground_truth_loss, one_hot, sparse_config_loss
from .metrics import StepRecord, get_metrics, read_records, records_to_csv, write_records
from .supernet import SuperNetwork
from .trainer import (
    ABLATION_VARIANTS,
    EvalResult,
    TrainPlan,
    dsnn_train_step,
    evaluate,
    gradient_mask,
    pretrain,
    progressive_freeze,
    run_ablation,
    run_pipeline,
    structured_mask,
    train_dsnn,
    train_single_sparsity,
    train_snn_baseline,
)

__all__ = [
    "accuracy",
    "distillation_loss",
    "ground_truth_loss",
    "one_hot",
    "sparse_config_loss",
    "StepRecord",
    "get_metrics",
    "read_records",
    "records_to_csv",
    "write_records",
    "SuperNetwork",
    "ABLATION_VARIANTS",
    "EvalResult",
    "TrainPlan",
    "dsnn_train_step",
    "evaluate",
    "gradient_mask",
    "pretrain",
    "progressive_freeze",
    "run_ablation",
    "run_pipeline",
    "structured_mask",
    "train_dsnn",
    "train_single_sparsity",
    "train_snn_baseline",
]
