"""
dsnn: dynamic sparsity neural networks.

One set of weights serves several sparsity configurations. Each
configuration picks its own block-structured masks from the shared
weights; a single training run covers all of them.

Quick start::

    pip install dsnn
    dsnn --dump-defaults > ~/.dsnn/config.toml
    dsnn pipeline              # pretrain -> dsnn -> single baselines -> compare

    # Or from Python:
    from dsnn import load_config, pretrain, train_dsnn, evaluate
"""

__version__ = "0.1.0"

from dsnn.config import ExperimentConfig, get_config, load_config
from dsnn.errors import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    DsnnError,
    MaskAlignmentError,
    NumericError,
    PlanError,
    ShapeError,
    UnknownConfigError,
)
from dsnn.models import LstmModel, MlpModel, Model, build_model
from dsnn.pruning import BinaryMask, SparsityConfig, SparsityPlan, get_mask
from dsnn.training import (
    SuperNetwork,
    TrainPlan,
    evaluate,
    pretrain,
    train_dsnn,
    train_single_sparsity,
    train_snn_baseline,
)

__all__ = [
    # Config
    "ExperimentConfig",
    "get_config",
    "load_config",
    # Errors
    "CheckpointError",
    "ConfigError",
    "DivergenceError",
    "DsnnError",
    "MaskAlignmentError",
    "NumericError",
    "PlanError",
    "ShapeError",
    "UnknownConfigError",
    # Models
    "LstmModel",
    "MlpModel",
    "Model",
    "build_model",
    # Masks and plans
    "BinaryMask",
    "SparsityConfig",
    "SparsityPlan",
    "get_mask",
    # Training
    "SuperNetwork",
    "TrainPlan",
    "evaluate",
    "pretrain",
    "train_dsnn",
    "train_single_sparsity",
    "train_snn_baseline",
]
