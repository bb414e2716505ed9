"""Toy models with named, prunable weights."""

from .base import Model, Parameter, WeightView
from .lstm import GATES, LstmModel
from .mlp import MlpModel
from .toy import MODEL_KINDS, TOY_LEVELS, build_model, build_toy_plan

__all__ = [
    "Model",
    "Parameter",
    "WeightView",
    "MlpModel",
    "LstmModel",
    "GATES",
    "MODEL_KINDS",
    "TOY_LEVELS",
    "build_model",
    "build_toy_plan",
]
