"""
Comparison tables across checkpoints.

One row per (checkpoint, configuration) with the eval metrics of the
induced sub-network:

    type      trainer family: Pretrain, Single, DSNN, SNN
    sparsity  configuration name (Large / Medium / Small ...)
    model     checkpoint label (e.g. single-Small, +distillation)
    loss, accuracy, params (nonzero effective weights), average (sparsity)

Single-sparsity checkpoints only contribute the configuration they were
trained for; DSNN and SNN checkpoints contribute every configuration.
"""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Sequence
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Any

from dsnn.data.synthetic import SyntheticDataset, generate
from dsnn.errors import CheckpointError, PlanError
from dsnn.pruning.plan import SparsityConfig
from dsnn.training.supernet import SuperNetwork
from dsnn.training.trainer import ABLATION_VARIANTS, evaluate

logger = logging.getLogger("dsnn.report")

COMPARE_FIELDS = ("type", "sparsity", "model", "loss", "accuracy", "params", "average")

TYPE_NAMES = {"pretrain": "Pretrain", "single": "Single", "dsnn": "DSNN", "snn": "SNN"}
_TYPE_ORDER = ["Pretrain", "Single", "DSNN", "SNN"]


@dataclass(frozen=True)
class CompareRow:
    type: str
    sparsity: str
    model: str
    loss: float
    accuracy: float
    params: int
    average: float


def eval_dataset(data_config: dict[str, Any]) -> SyntheticDataset:
    """Regenerate the eval split recorded in a checkpoint manifest."""
    p = dict(data_config)
    if not p:
        raise CheckpointError("<manifest>", "no data config recorded; cannot rebuild the eval set")
    task, seed = p.pop("task"), p.pop("seed")
    n_train, n_eval = p.pop("n_train"), p.pop("n_eval")
    return generate(task, seed, n_train + n_eval, **p).split(n_eval)[1]


def check_plans_compatible(nets: Sequence[SuperNetwork]) -> dict[str, SparsityConfig]:
    """Configs with the same name must carry the same levels across checkpoints."""
    seen: dict[str, SparsityConfig] = {}
    for net in nets:
        for c in net.plan.configs:
            prev = seen.get(c.name)
            if prev is not None and prev.levels != c.levels:
                raise PlanError(f"incompatible plans: config '{c.name}' differs in checkpoint '{net.label}'")
            seen[c.name] = c
    return seen


def _rows_for(net: SuperNetwork, dataset: SyntheticDataset) -> list[CompareRow]:
    names = net.trained_configs if net.variant in ("single", "pretrain") else net.plan.names
    rows = []
    for name in names:
        r = evaluate(net, name, dataset)
        rows.append(CompareRow(
            type=TYPE_NAMES.get(net.variant, net.variant),
            sparsity=name,
            model=net.label,
            loss=r.loss,
            accuracy=r.accuracy,
            params=r.parameters,
            average=r.sparsity,
        ))
    return rows


def compare(nets: Sequence[SuperNetwork], dataset: SyntheticDataset, ablation: bool = False) -> list[CompareRow]:
    if len(nets) < 2:
        raise PlanError(f"compare needs at least 2 checkpoints, got {len(nets)}")
    configs = check_plans_compatible(nets)
    rows = [row for net in nets for row in _rows_for(net, dataset)]
    config_order = list(configs)
    if ablation:
        labels = [label for label, _ in ABLATION_VARIANTS]
        rows.sort(key=lambda r: (config_order.index(r.sparsity),
                                 labels.index(r.model) if r.model in labels else len(labels)))
    else:
        rows.sort(key=lambda r: (config_order.index(r.sparsity),
                                 _TYPE_ORDER.index(r.type) if r.type in _TYPE_ORDER else len(_TYPE_ORDER)))
    return rows


def rows_to_csv(rows: Sequence[CompareRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARE_FIELDS)
    for r in rows:
        writer.writerow(astuple(r))
    return buf.getvalue()


def rows_to_markdown(rows: Sequence[CompareRow]) -> str:
    header = "| " + " | ".join(COMPARE_FIELDS) + " |"
    rule = "|" + "|".join("---" for _ in COMPARE_FIELDS) + "|"
    body = [
        f"| {r.type} | {r.sparsity} | {r.model} | {r.loss:.4f} | {r.accuracy:.4f} | {r.params} | {r.average:.3f} |"
        for r in rows
    ]
    return "\n".join([header, rule, *body]) + "\n"


def write_report(rows: Sequence[CompareRow], csv_path: Path | None, markdown_path: Path | None) -> None:
    for path, text in ((csv_path, rows_to_csv(rows)), (markdown_path, rows_to_markdown(rows))):
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
            logger.info(f"Wrote {path}")
