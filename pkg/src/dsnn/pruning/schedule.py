"""Gradual sparsity ramp."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PruneSchedule:
    """Cubic ramp from 0 to ``target`` over ``ramp_steps``."""

    ramp_steps: int
    target: float

    def at(self, step: int) -> float:
        return cubic_sparsity(step, self)


def cubic_sparsity(step: int, schedule: PruneSchedule) -> float:
    """s(t) = S * (1 - (1 - min(t, T) / T) ** 3)."""
    if schedule.ramp_steps <= 0:
        raise ValueError(f"ramp_steps must be positive, got {schedule.ramp_steps}")
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    progress = min(step, schedule.ramp_steps) / schedule.ramp_steps
    return schedule.target * (1.0 - (1.0 - progress) ** 3)
