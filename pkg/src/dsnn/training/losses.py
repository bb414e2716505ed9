"""Ground-truth and distillation losses."""

from __future__ import annotations

import numpy as np
import numpy.typing as npt

from dsnn.core.autodiff import Node, Tensor, add, constant, mul, softmax, softmax_cross_entropy
from dsnn.errors import ShapeError


def one_hot(labels: npt.NDArray[np.int64], classes: int) -> Tensor:
    return np.eye(classes)[labels]


def ground_truth_loss(logits: Node, labels: npt.NDArray[np.int64]) -> Node:
    return softmax_cross_entropy(logits, one_hot(labels, logits.shape[1]))


def _scale(x: Node, factor: float) -> Node:
    return x if factor == 1.0 else mul(x, constant(np.asarray(factor)))


def distillation_loss(student_logits: Node, teacher_logits: Tensor | Node, temperature: float = 1.0) -> Node:
    """Cross-entropy of the student against softmax(teacher / T).

    The teacher is read as a plain array, so no gradient reaches it.
    """
    teacher = teacher_logits.value if isinstance(teacher_logits, Node) else np.asarray(teacher_logits)
    if teacher.shape != student_logits.shape:
        raise ShapeError("distillation_loss", student_logits.shape, teacher.shape)
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    probs = softmax(teacher / temperature)
    return softmax_cross_entropy(_scale(student_logits, 1.0 / temperature), probs)


def sparse_config_loss(
    student_logits: Node,
    teacher_logits: Tensor,
    labels: npt.NDArray[np.int64],
    distillation: bool,
    ground_truth_mix: float = 0.0,
    temperature: float = 1.0,
) -> Node:
    """Loss for one sparse configuration: distillation, ground truth, or a mix."""
    if not distillation or ground_truth_mix >= 1.0:
        return ground_truth_loss(student_logits, labels)
    distill = distillation_loss(student_logits, teacher_logits, temperature)
    if ground_truth_mix <= 0.0:
        return distill
    truth = ground_truth_loss(student_logits, labels)
    return add(_scale(distill, 1.0 - ground_truth_mix), _scale(truth, ground_truth_mix))


def accuracy(logits: Tensor, labels: npt.NDArray[np.int64]) -> float:
    return float((np.argmax(logits, axis=1) == labels).mean())
