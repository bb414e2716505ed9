"""
Toy model factory and the three-configuration toy plan.

The plan mirrors the Large / Medium / Small grid: recurrent-class weights
at 0 / 70 / 90 % and output-class weights at 0 / 0 / 50 %. For the MLP the
hidden fully-connected layers take the recurrent-class levels.
"""

from __future__ import annotations

from collections.abc import Mapping
from typing import Any

from dsnn.errors import ConfigError
from dsnn.models.base import Model
from dsnn.models.lstm import LstmModel
from dsnn.models.mlp import MlpModel
from dsnn.pruning.plan import SparsityConfig, SparsityPlan

MODEL_KINDS: dict[str, type[Model]] = {
    MlpModel.kind: MlpModel,
    LstmModel.kind: LstmModel,
}

TOY_LEVELS: dict[str, dict[str, float]] = {
    "Large": {"hidden": 0.0, "output": 0.0},
    "Medium": {"hidden": 0.7, "output": 0.0},
    "Small": {"hidden": 0.9, "output": 0.5},
}

_LSTM_GROUPS = {"hidden": ["lstm*"], "output": ["fc*"]}


def build_model(spec: Mapping[str, Any]) -> Model:
    """Instantiate a model from ``Model.spec()`` output."""
    args = dict(spec)
    kind = args.pop("kind", None)
    cls = MODEL_KINDS.get(str(kind))
    if cls is None:
        raise ConfigError("model.kind", f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    try:
        return cls(**args)
    except TypeError as e:
        raise ConfigError("model", str(e)) from e


def build_toy_plan(model: Model | None = None) -> SparsityPlan:
    """Large / Medium / Small. Without a model, patterns target the LSTM layout."""
    groups = model.layer_groups() if model is not None else _LSTM_GROUPS
    configs = []
    for name, levels in TOY_LEVELS.items():
        patterns = {p: levels[group] for group, pats in groups.items() for p in pats}
        configs.append(SparsityConfig(name=name, levels=patterns))
    plan = SparsityPlan.of(configs)
    if model is not None:
        plan.validate_for(model.prunable)
    return plan
