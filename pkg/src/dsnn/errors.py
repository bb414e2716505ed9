"""
dsnn errors: one hierarchy for every failure the toolkit reports.

Each error carries the structured fields a caller needs (op name, config,
step, path) and formats them into its message. The CLI maps classes to
exit codes via ``exit_code``.
"""

from __future__ import annotations

from typing import Any

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class DsnnError(Exception):
    """Base class for all dsnn errors."""

    exit_code: int = EXIT_RUNTIME


# ---------------------------------------------------------------------------
# Numeric / shape errors
# ---------------------------------------------------------------------------

class ShapeError(DsnnError):
    def __init__(self, op: str, expected: Any, got: Any):
        self.op = op
        self.expected = expected
        self.got = got
        super().__init__(f"[{op}] shape mismatch: expected {expected}, got {got}")


class NumericError(DsnnError):
    def __init__(self, op: str, detail: str = "non-finite value"):
        self.op = op
        self.detail = detail
        super().__init__(f"[{op}] {detail}")


class DivergenceError(NumericError):
    def __init__(self, config: str, step: int, loss: float):
        self.config = config
        self.step = step
        self.loss = loss
        super().__init__("train", f"loss became {loss} for config '{config}' at step {step}")


class MaskAlignmentError(DsnnError):
    def __init__(self, block_height: int, reason: str):
        self.block_height = block_height
        super().__init__(f"mask not aligned to {block_height}x1 blocks: {reason}")


# ---------------------------------------------------------------------------
# Configuration errors
# ---------------------------------------------------------------------------

class ConfigError(DsnnError):
    exit_code = EXIT_USAGE

    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"config '{key}': {reason}")


class PlanError(DsnnError):
    exit_code = EXIT_USAGE


class UnknownConfigError(DsnnError):
    exit_code = EXIT_USAGE

    def __init__(self, name: str, available: list[str]):
        self.name = name
        self.available = available
        super().__init__(f"unknown sparsity config '{name}'. Available: {', '.join(available)}")


# ---------------------------------------------------------------------------
# Checkpoint errors
# ---------------------------------------------------------------------------

class CheckpointError(DsnnError):
    def __init__(self, path: str, reason: str, exit_code: int = EXIT_RUNTIME):
        self.path = path
        self.reason = reason
        self.exit_code = exit_code
        super().__init__(f"checkpoint {path}: {reason}")
