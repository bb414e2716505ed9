"""
Training metrics: process-wide counters plus the per-step CSV records.

``TrainingMetrics`` is a process-wide, thread-safe collector fed by the
trainer. ``StepRecord`` rows follow the frozen CSV schema
``step,config,loss,accuracy,sparsity,wall_ms``.
"""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Iterable
from dataclasses import astuple, dataclass, field
from pathlib import Path
from threading import Lock
from typing import Any

logger = logging.getLogger("dsnn.metrics")

CSV_FIELDS = ("step", "config", "loss", "accuracy", "sparsity", "wall_ms")


@dataclass
class CounterMetric:
    name: str
    description: str
    value: int = 0
    labels: dict[tuple, int] = field(default_factory=dict)

    def inc(self, labels: dict[str, str] | None = None, value: int = 1) -> None:
        self.value += value
        if labels:
            key = tuple(sorted(labels.items()))
            self.labels[key] = self.labels.get(key, 0) + value

    def by_label(self, name: str) -> dict[str, int]:
        """Totals keyed by one label's value, in first-seen order."""
        out: dict[str, int] = {}
        for key, count in self.labels.items():
            value = dict(key).get(name)
            if value is not None:
                out[value] = out.get(value, 0) + count
        return out


@dataclass
class HistogramMetric:
    name: str
    description: str
    observations: list[float] = field(default_factory=list)
    sum_value: float = 0.0
    count: int = 0

    def observe(self, value: float) -> None:
        self.observations.append(value)
        self.sum_value += value
        self.count += 1
        if len(self.observations) > 1000:
            self.observations = self.observations[-1000:]

    def percentile(self, p: float) -> float:
        if not self.observations:
            return 0.0
        s = sorted(self.observations)
        return s[min(int(len(s) * p), len(s) - 1)]


class TrainingMetrics:
    """Thread-safe metrics collector."""

    def __init__(self) -> None:
        self._lock = Lock()
        self.mask_refreshes = CounterMetric("dsnn_mask_refreshes_total", "Mask refreshes by config")
        self.divergences = CounterMetric("dsnn_divergences_total", "Non-finite losses by config")
        self.step_duration = HistogramMetric("dsnn_step_duration_ms", "Wall time of one training step")

    def record_mask_refresh(self, config: str) -> None:
        with self._lock:
            self.mask_refreshes.inc({"config": config})

    def record_divergence(self, config: str) -> None:
        with self._lock:
            self.divergences.inc({"config": config})

    def observe_step(self, wall_ms: float) -> None:
        with self._lock:
            self.step_duration.observe(wall_ms)

    def get_summary(self) -> dict[str, Any]:
        with self._lock:
            return {
                "mask_refreshes": self.mask_refreshes.value,
                "mask_refreshes_by_config": self.mask_refreshes.by_label("config"),
                "divergences": self.divergences.value,
                "divergences_by_config": self.divergences.by_label("config"),
                "steps": self.step_duration.count,
                "step_ms_p50": self.step_duration.percentile(0.5),
                "step_ms_p95": self.step_duration.percentile(0.95),
            }


_metrics: TrainingMetrics | None = None


def get_metrics() -> TrainingMetrics:
    global _metrics
    if _metrics is None:
        _metrics = TrainingMetrics()
    return _metrics


def reset_metrics() -> None:
    global _metrics
    _metrics = None


# ---------------------------------------------------------------------------
# Step records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    step: int
    config: str
    loss: float
    accuracy: float
    sparsity: float
    wall_ms: float = 0.0

    def deterministic(self) -> dict[str, Any]:
        """Every field except wall time."""
        return {"step": self.step, "config": self.config, "loss": self.loss,
                "accuracy": self.accuracy, "sparsity": self.sparsity}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StepRecord:
        return cls(
            step=int(data["step"]),
            config=str(data["config"]),
            loss=float(data["loss"]),
            accuracy=float(data["accuracy"]),
            sparsity=float(data["sparsity"]),
            wall_ms=float(data.get("wall_ms", 0.0)),
        )


def records_to_csv(records: Iterable[StepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow(astuple(r))
    return buf.getvalue()


def write_records(path: Path, records: Iterable[StepRecord]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(records_to_csv(records))
    logger.debug(f"Wrote metrics CSV {path}")


def read_records(path: Path) -> list[StepRecord]:
    with path.open(newline="") as f:
        return [StepRecord.from_dict(row) for row in csv.DictReader(f)]
