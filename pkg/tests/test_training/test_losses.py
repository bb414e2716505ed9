"""Tests for ground-truth and distillation losses."""

import numpy as np
import pytest

from dsnn.core.autodiff import backward, constant, variable
from dsnn.errors import ShapeError
from dsnn.training.losses import (
    accuracy,
    distillation_loss,
    ground_truth_loss,
    one_hot,
    sparse_config_loss,
)

LOGITS = np.array([[1.0, -0.5, 0.2], [0.1, 0.4, -1.0]])
LABELS = np.array([0, 1])


class TestDistillation:
    def test_student_equals_teacher_zero_gradient(self):
        z = variable(LOGITS)
        backward(distillation_loss(z, LOGITS.copy()))
        np.testing.assert_allclose(z.grad, 0.0, atol=1e-15)

    def test_teacher_gets_no_gradient(self):
        teacher = variable(LOGITS + 1.0)
        student = variable(LOGITS)
        backward(distillation_loss(student, teacher))
        assert teacher.grad is None

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            distillation_loss(variable(LOGITS), np.zeros((2, 4)))

    def test_temperature_must_be_positive(self):
        with pytest.raises(ValueError):
            distillation_loss(variable(LOGITS), LOGITS, temperature=0.0)

    def test_temperature_softens(self):
        sharp = float(distillation_loss(constant(LOGITS * 0), LOGITS * 5, temperature=1.0).value)
        soft = float(distillation_loss(constant(LOGITS * 0), LOGITS * 5, temperature=10.0).value)
        assert soft > 0 and sharp > 0


class TestSparseConfigLoss:
    def test_without_distillation_uses_labels(self):
        truth = float(ground_truth_loss(constant(LOGITS), LABELS).value)
        out = sparse_config_loss(constant(LOGITS), LOGITS, LABELS, distillation=False)
        assert float(out.value) == truth

    def test_mix(self):
        teacher = LOGITS[::-1].copy()
        truth = float(ground_truth_loss(constant(LOGITS), LABELS).value)
        distill = float(distillation_loss(constant(LOGITS), teacher).value)
        mixed = sparse_config_loss(constant(LOGITS), teacher, LABELS, distillation=True, ground_truth_mix=0.25)
        assert float(mixed.value) == pytest.approx(0.75 * distill + 0.25 * truth)


class TestHelpers:
    def test_one_hot(self):
        np.testing.assert_array_equal(one_hot(np.array([2, 0]), 3), [[0, 0, 1], [1, 0, 0]])

    def test_accuracy(self):
        assert accuracy(LOGITS, LABELS) == 1.0
        assert accuracy(LOGITS, np.array([2, 2])) == 0.0
