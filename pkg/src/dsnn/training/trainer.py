"""
Trainers: pretraining, the multi-configuration DSNN loop, progressive
freezing, and the single-sparsity and structured-mask baselines.

One training step over a plan [C0, C1, ..., CL]:

    1. forward the full model, backward against the labels; keep its
       logits y' as the (constant) teacher
    2. for each sparse config, least sparse first:
         refresh its masks when the step is a refresh step
         forward N o M, backward against y' (or the labels)
    3. one Adam step on the summed gradient, then the EMA update
    4. the summed gradient becomes grad[W] for the next mask refresh

With ``lazy_update`` off, Adam steps after every configuration and masks
refresh every step.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np

from dsnn.core.autodiff import Node, Tensor, backward
from dsnn.core.optim import AdamState, adam_step, effective_ema_decay, ema_update, warmup_lr
from dsnn.data.synthetic import Batch, SyntheticDataset
from dsnn.errors import ConfigError, DivergenceError, NumericError
from dsnn.models.base import Model
from dsnn.pruning.masks import BinaryMask, get_mask, mask_union, snn_structured_mask
from dsnn.pruning.plan import SparsityConfig, SparsityPlan
from dsnn.pruning.schedule import PruneSchedule, cubic_sparsity
from dsnn.training.losses import accuracy, ground_truth_loss, sparse_config_loss
from dsnn.training.metrics import StepRecord, get_metrics
from dsnn.training.supernet import SuperNetwork

logger = logging.getLogger("dsnn.trainer")

FREEZE_RECORD = "freeze"

MaskFn = Callable[[SuperNetwork, str, float], BinaryMask]


# ---------------------------------------------------------------------------
# Train plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainPlan:
    """Everything a trainer needs besides the model and the data."""

    plan: SparsityPlan
    total_steps: int = 10_000
    freeze_steps: int = 1_000
    mask_update_frequency: int | None = 100
    ramp_steps: int = 2_000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 0
    ema_decay: float = 0.999
    batch_size: int = 64
    block_height: int = 4
    seed: int = 0
    distillation: bool = True
    lazy_update: bool = True
    ground_truth_mix: float = 0.0
    temperature: float = 1.0
    log_every: int = 100

    def __post_init__(self) -> None:
        checks: list[tuple[str, bool, str]] = [
            ("total_steps", self.total_steps >= 1, "must be >= 1"),
            ("freeze_steps", self.freeze_steps >= 0, "must be >= 0"),
            ("mask_update_frequency",
             self.mask_update_frequency is None or self.mask_update_frequency >= 1,
             "must be >= 1 (omit for never)"),
            ("ramp_steps", self.ramp_steps >= 1, "must be >= 1"),
            ("lr", self.lr > 0, "must be > 0"),
            ("warmup_steps", self.warmup_steps >= 0, "must be >= 0"),
            ("ema_decay", 0.0 < self.ema_decay < 1.0, "must be in (0, 1)"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("block_height", self.block_height >= 1, "must be >= 1"),
            ("ground_truth_mix", 0.0 <= self.ground_truth_mix <= 1.0, "must be in [0, 1]"),
            ("temperature", self.temperature > 0, "must be > 0"),
            ("log_every", self.log_every >= 1, "must be >= 1"),
        ]
        for key, ok, reason in checks:
            if not ok:
                raise ConfigError(f"train.{key}", f"{reason}, got {getattr(self, key)}")

    def replace(self, **changes: Any) -> TrainPlan:
        return dataclasses.replace(self, **changes)

    def adam_state(self) -> AdamState:
        return AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def is_refresh_step(self, step: int) -> bool:
        if not self.lazy_update:
            return True
        if self.mask_update_frequency is None:
            return step == 0
        return step % self.mask_update_frequency == 0


# ---------------------------------------------------------------------------
# Mask functions
# ---------------------------------------------------------------------------

def gradient_mask(net: SuperNetwork, weight: str, sparsity: float) -> BinaryMask:
    """Prune the blocks with the smallest |w * grad[W]|."""
    p = net.model.parameters[weight]
    return get_mask(p.value, net.score_grads[weight], sparsity, net.block_height)


def structured_mask(net: SuperNetwork, weight: str, sparsity: float) -> BinaryMask:
    """Keep the leading hyper-rectangle; ignores weights and gradients."""
    return snn_structured_mask(net.model.parameters[weight].shape, sparsity)


MASK_FNS: dict[str, MaskFn] = {
    "pretrain": gradient_mask,
    "dsnn": gradient_mask,
    "single": gradient_mask,
    "snn": structured_mask,
}


def refresh_masks(net: SuperNetwork, config: SparsityConfig, step: int, tp: TrainPlan, mask_fn: MaskFn) -> None:
    """Recompute every mask of ``config`` at the ramped sparsity for ``step``."""
    table = net.masks[config.name]
    for w in net.model.prunable:
        s = cubic_sparsity(step, PruneSchedule(tp.ramp_steps, config.level_for(w)))
        table[w] = mask_fn(net, w, s)
    get_metrics().record_mask_refresh(config.name)


# ---------------------------------------------------------------------------
# Step internals
# ---------------------------------------------------------------------------

def _run_config(
    net: SuperNetwork,
    batch: Batch,
    config: str,
    step: int,
    loss_fn: Callable[[Node], Node],
    masks: Mapping[str, BinaryMask] | None = None,
    frozen: Mapping[str, BinaryMask] | None = None,
) -> tuple[float, Tensor]:
    """Forward + backward for one configuration; returns (loss, logits)."""
    try:
        logits = net.model.logits(batch.inputs, masks=masks, frozen=frozen)
        loss = loss_fn(logits)
        backward(loss)
    except NumericError as e:
        get_metrics().record_divergence(config)
        logger.error(f"[{net.label}] non-finite value in config '{config}' at step {step}: {e}")
        raise DivergenceError(config, step, float("nan")) from e
    value = float(loss.value)
    if not np.isfinite(value):
        get_metrics().record_divergence(config)
        raise DivergenceError(config, step, value)
    return value, logits.value


def _optimizer_step(
    model: Model,
    state: AdamState,
    lr: float,
    update_masks: Mapping[str, Tensor] | None = None,
) -> None:
    adam_step(model.values(), model.grads(), state, lr=lr, update_masks=update_masks)
    model.zero_grad()


def _ema_step(net: SuperNetwork, tp: TrainPlan, where: Mapping[str, Tensor] | None = None) -> None:
    decay = effective_ema_decay(tp.ema_decay, net.ema_updates)
    for name, p in net.model.parameters.items():
        p.ema = ema_update(p.value, p.ema, decay, None if where is None else where.get(name))
    net.ema_updates += 1


def _accumulate(into: dict[str, Tensor], model: Model) -> None:
    for w in into:
        into[w] += model.parameters[w].grad


def _dense_score_grads(net: SuperNetwork, batch: Batch, step: int) -> dict[str, Tensor]:
    """grad[W] of the label loss on the unmasked model; never applied to the weights."""
    model = net.model
    pending = {name: p.grad for name, p in model.parameters.items()}
    model.zero_grad()
    _run_config(net, batch, net.plan.full.name, step, lambda z: ground_truth_loss(z, batch.labels))
    grads = {w: model.parameters[w].grad.copy() for w in model.prunable}
    for name, g in pending.items():
        model.parameters[name].grad = g
    return grads


def _record(step: int, config: str, loss: float, logits: Tensor, batch: Batch, sparsity: float, t0: int) -> StepRecord:
    wall_ms = (time.perf_counter_ns() - t0) / 1e6
    return StepRecord(step, config, loss, accuracy(logits, batch.labels), sparsity, wall_ms)


def dsnn_train_step(
    net: SuperNetwork,
    batch: Batch,
    step: int,
    tp: TrainPlan,
    state: AdamState,
    mask_fn: MaskFn = gradient_mask,
    include_full: bool = True,
) -> list[StepRecord]:
    """One step over every configuration of ``net.plan``.

    ``include_full=False`` skips the full-model pass; sparse configs then
    train against the labels. Block scores still need a dense gradient, so
    an unapplied full-model backward supplies grad[W] in that case.
    """
    model = net.model
    model.zero_grad()
    lr = warmup_lr(tp.lr, step, tp.warmup_steps)
    labels = batch.labels
    summed = None if tp.lazy_update else {w: np.zeros_like(model.parameters[w].value) for w in model.prunable}
    records: list[StepRecord] = []
    teacher: Tensor | None = None

    if include_full:
        t0 = time.perf_counter_ns()
        full = net.plan.full
        loss, teacher = _run_config(net, batch, full.name, step, lambda z: ground_truth_loss(z, labels))
        records.append(_record(step, full.name, loss, teacher, batch, 0.0, t0))
        if summed is not None:
            _accumulate(summed, model)
            _optimizer_step(model, state, lr)

    def loss_fn(z: Node) -> Node:
        if teacher is None:
            return ground_truth_loss(z, labels)
        return sparse_config_loss(z, teacher, labels, tp.distillation, tp.ground_truth_mix, tp.temperature)

    for config in net.sparse_order():
        t0 = time.perf_counter_ns()
        if tp.is_refresh_step(step):
            refresh_masks(net, config, step, tp, mask_fn)
        masks = net.masks[config.name]
        loss, logits = _run_config(net, batch, config.name, step, loss_fn, masks=masks)
        records.append(_record(step, config.name, loss, logits, batch, net.average_sparsity(config.name), t0))
        if summed is not None:
            _accumulate(summed, model)
            _optimizer_step(model, state, lr)

    score = None if include_full else _dense_score_grads(net, batch, step)
    if summed is None:
        summed = {w: model.parameters[w].grad.copy() for w in model.prunable}
        _optimizer_step(model, state, lr)
    _ema_step(net, tp)
    net.score_grads = summed if score is None else score
    net.step += 1
    return records


def _train_loop(
    net: SuperNetwork,
    data: SyntheticDataset,
    tp: TrainPlan,
    steps: int,
    step_fn: Callable[[Batch, int], list[StepRecord]],
) -> None:
    metrics = get_metrics()
    batches: Iterator[Batch] = data.batches(tp.batch_size, tp.seed)
    for step in range(steps):
        t0 = time.perf_counter_ns()
        records = step_fn(next(batches), step)
        metrics.observe_step((time.perf_counter_ns() - t0) / 1e6)
        net.history.extend(records)
        if step % tp.log_every == 0 or step == steps - 1:
            summary = ", ".join(f"{r.config} loss={r.loss:.4f} acc={r.accuracy:.3f}" for r in records)
            logger.info(f"[{net.label}] step {step}/{steps}: {summary}")


def _stage_init(
    pretrained: SuperNetwork,
    plan: SparsityPlan,
    tp: TrainPlan,
    variant: str,
    label: str,
) -> SuperNetwork:
    """Copy the pretrained EMA weights into a fresh super-network."""
    model = pretrained.model.clone()
    shadows = {n: p.ema for n, p in model.parameters.items()}
    model.load_values(shadows, shadows)
    return SuperNetwork.create(model, plan, tp.block_height, variant=variant, label=label)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def pretrain(model: Model, data: SyntheticDataset, steps: int, tp: TrainPlan) -> SuperNetwork:
    """Dense training of the full model; EMA shadows seed every later stage."""
    if steps < 0:
        raise ConfigError("train.pretrain_steps", f"must be >= 0, got {steps}")
    net = SuperNetwork.create(model, SparsityPlan.of([tp.plan.full]), tp.block_height, variant="pretrain")
    state = tp.adam_state()
    logger.info(f"Pretraining {model.kind} ({model.num_parameters()} parameters) for {steps} steps")
    _train_loop(net, data, tp, steps, lambda b, s: dsnn_train_step(net, b, s, tp, state))
    net.trained_configs = [tp.plan.full.name]
    return net


def progressive_freeze(
    net: SuperNetwork,
    data: SyntheticDataset,
    tp: TrainPlan,
    steps: int | None = None,
    mask_fn: MaskFn | None = None,
) -> SuperNetwork:
    """Train only the weights outside the union of the sparse configs' masks.

    Final masks are recomputed at target sparsity from grad[W] first.
    Positions inside the union, and every non-prunable parameter, keep
    their exact bits.
    """
    steps = tp.freeze_steps if steps is None else steps
    if steps <= 0:
        return net
    sparse = net.sparse_order()
    if not sparse:
        logger.warning(f"[{net.label}] plan has no sparse configs; nothing to freeze")
        return net
    mask_fn = mask_fn or MASK_FNS[net.variant]
    model = net.model
    for config in sparse:
        net.set_masks(config.name, {w: mask_fn(net, w, config.level_for(w)) for w in model.prunable})
        get_metrics().record_mask_refresh(config.name)

    frozen: dict[str, BinaryMask] = {}
    for name, p in model.parameters.items():
        if p.prunable:
            frozen[name] = mask_union([net.masks[c.name][name] for c in sparse])
        else:
            frozen[name] = BinaryMask.ones(p.shape)
    trainable = {n: (~m.to_array()).astype(np.float64) for n, m in frozen.items()}
    free = sum(int(t.sum()) for t in trainable.values())
    logger.info(f"[{net.label}] progressive freezing for {steps} steps; {free} free weights")

    state = tp.adam_state()
    start = net.step

    def step_fn(batch: Batch, step: int) -> list[StepRecord]:
        t0 = time.perf_counter_ns()
        model.zero_grad()
        lr = warmup_lr(tp.lr, step, tp.warmup_steps)
        loss, logits = _run_config(
            net, batch, FREEZE_RECORD, start + step, lambda z: ground_truth_loss(z, batch.labels), frozen=frozen
        )
        _optimizer_step(model, state, lr, update_masks=trainable)
        _ema_step(net, tp, where=trainable)
        net.step += 1
        return [_record(start + step, FREEZE_RECORD, loss, logits, batch, 0.0, t0)]

    _train_loop(net, data, tp, steps, step_fn)
    return net


def train_dsnn(
    pretrained: SuperNetwork,
    data: SyntheticDataset,
    tp: TrainPlan,
    variant: str = "dsnn",
    label: str = "",
) -> SuperNetwork:
    """Train one super-network for every config of ``tp.plan``."""
    mask_fn = MASK_FNS[variant]
    net = _stage_init(pretrained, tp.plan, tp, variant, label or variant)
    state = tp.adam_state()
    logger.info(
        f"[{net.label}] training {net.plan.names} for {tp.total_steps} steps "
        f"(lazy_update={tp.lazy_update}, distillation={tp.distillation})"
    )
    _train_loop(net, data, tp, tp.total_steps, lambda b, s: dsnn_train_step(net, b, s, tp, state, mask_fn))
    net.trained_configs = list(net.plan.names)
    progressive_freeze(net, data, tp, mask_fn=mask_fn)
    return net


def train_single_sparsity(
    pretrained: SuperNetwork,
    data: SyntheticDataset,
    config: SparsityConfig | str,
    tp: TrainPlan,
) -> SuperNetwork:
    """Baseline: one network trained for a single config against the labels."""
    if isinstance(config, str):
        config = tp.plan.get(config)
    plan = SparsityPlan.of([config]) if config.is_full else SparsityPlan.of([tp.plan.full, config])
    single_tp = tp.replace(plan=plan, lazy_update=True, distillation=False)
    net = _stage_init(pretrained, plan, single_tp, "single", f"single-{config.name}")
    state = single_tp.adam_state()
    include_full = config.is_full
    logger.info(f"[{net.label}] training single config '{config.name}' for {tp.total_steps} steps")
    _train_loop(
        net, data, single_tp, tp.total_steps,
        lambda b, s: dsnn_train_step(net, b, s, single_tp, state, gradient_mask, include_full=include_full),
    )
    net.trained_configs = [config.name]
    return net


def train_snn_baseline(pretrained: SuperNetwork, data: SyntheticDataset, tp: TrainPlan) -> SuperNetwork:
    """The DSNN loop with score-independent structured masks."""
    return train_dsnn(pretrained, data, tp, variant="snn", label="snn")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    config: str
    loss: float
    accuracy: float
    sparsity: float
    parameters: int
    weight_sparsity: dict[str, float]
    variant: str = ""
    label: str = ""

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def evaluate(net: SuperNetwork, config_name: str, dataset: SyntheticDataset, batch_size: int = 1024) -> EvalResult:
    """Mean loss and accuracy of the sub-network for ``config_name`` on EMA weights.

    Reads the model only; nothing is written back.
    """
    masks = net.masks_for(config_name)
    n = len(dataset)
    total_loss = 0.0
    correct = 0.0
    for start in range(0, n, batch_size):
        inputs = dataset.inputs[start : start + batch_size]
        labels = dataset.labels[start : start + batch_size]
        logits = net.model.logits(inputs, masks=masks, use_ema=True)
        loss = ground_truth_loss(logits, labels)
        total_loss += float(loss.value) * len(labels)
        correct += accuracy(logits.value, labels) * len(labels)
    return EvalResult(
        config=config_name,
        loss=total_loss / n,
        accuracy=correct / n,
        sparsity=net.average_sparsity(config_name),
        parameters=net.effective_parameters(config_name),
        weight_sparsity=net.realized_sparsity(config_name),
        variant=net.variant,
        label=net.label,
    )


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

ABLATION_VARIANTS: tuple[tuple[str, dict[str, bool]], ...] = (
    ("baseline", {"lazy_update": False, "distillation": False, "freeze": False}),
    ("+lazy-update", {"lazy_update": True, "distillation": False, "freeze": False}),
    ("+distillation", {"lazy_update": True, "distillation": True, "freeze": False}),
    ("+freezing", {"lazy_update": True, "distillation": True, "freeze": True}),
)


def run_ablation(pretrained: SuperNetwork, data: SyntheticDataset, tp: TrainPlan) -> dict[str, SuperNetwork]:
    """The four-row grid, each row adding one technique to the previous."""
    if tp.freeze_steps == 0:
        logger.warning("freeze_steps is 0; the '+freezing' row will equal '+distillation'")
    nets: dict[str, SuperNetwork] = {}
    for label, flags in ABLATION_VARIANTS:
        row_tp = tp.replace(
            lazy_update=flags["lazy_update"],
            distillation=flags["distillation"],
            freeze_steps=tp.freeze_steps if flags["freeze"] else 0,
        )
        nets[label] = train_dsnn(pretrained, data, row_tp, label=label)
    return nets


def run_pipeline(
    model: Model,
    data: SyntheticDataset,
    tp: TrainPlan,
    pretrain_steps: int,
    with_snn: bool = False,
) -> dict[str, SuperNetwork]:
    """pretrain -> DSNN -> one single-sparsity model per sparse config (-> SNN)."""
    nets: dict[str, SuperNetwork] = {"pretrain": pretrain(model, data, pretrain_steps, tp)}
    nets["dsnn"] = train_dsnn(nets["pretrain"], data, tp)
    for config in tp.plan.sparse:
        nets[f"single-{config.name}"] = train_single_sparsity(nets["pretrain"], data, config, tp)
    if with_snn:
        nets["snn"] = train_snn_baseline(nets["pretrain"], data, tp)
    return nets
