"""
Sparsity configurations and plans.

A ``SparsityConfig`` maps weight-name glob patterns (``fnmatch`` syntax) to a
sparsity level. A ``SparsityPlan`` is the ordered list [C0, C1, ..., CL] the
super-network is trained for; C0 is always the full network.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from fnmatch import fnmatchcase
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator

from dsnn.errors import PlanError, UnknownConfigError


class SparsityConfig(BaseModel):
    """One sparsity configuration C."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(..., pattern=r"^[A-Za-z0-9_-]+$", max_length=64)
    levels: dict[str, float] = Field(default_factory=dict)

    @field_validator("levels")
    @classmethod
    def _check_levels(cls, levels: dict[str, float]) -> dict[str, float]:
        for pattern, s in levels.items():
            if not 0.0 <= s < 1.0:
                raise ValueError(f"sparsity for '{pattern}' must be in [0, 1), got {s}")
        return levels

    @property
    def is_full(self) -> bool:
        return all(s == 0.0 for s in self.levels.values())

    def level_for(self, weight_name: str) -> float:
        """Sparsity for ``weight_name``; exactly one pattern must match."""
        matches = [p for p in self.levels if fnmatchcase(weight_name, p)]
        if len(matches) != 1:
            raise PlanError(
                f"config '{self.name}': weight '{weight_name}' matched {len(matches)} patterns "
                f"{matches or list(self.levels)}; expected exactly one"
            )
        return self.levels[matches[0]]

    def average_sparsity(self, weight_sizes: Mapping[str, int]) -> float:
        """Parameter-weighted average over the given weights."""
        total = sum(weight_sizes.values())
        if total == 0:
            return 0.0
        return sum(self.level_for(n) * size for n, size in weight_sizes.items()) / total


@dataclass(frozen=True)
class SparsityPlan:
    """Ordered configurations; ``configs[0]`` is the full model."""

    configs: tuple[SparsityConfig, ...]

    def __post_init__(self) -> None:
        if not self.configs:
            raise PlanError("a sparsity plan needs at least the full configuration")
        if not self.configs[0].is_full:
            raise PlanError(f"first config '{self.configs[0].name}' must have sparsity 0 for every weight")
        names = [c.name for c in self.configs]
        if len(set(names)) != len(names):
            raise PlanError(f"duplicate config names in plan: {names}")

    @classmethod
    def of(cls, configs: Iterable[SparsityConfig]) -> SparsityPlan:
        return cls(tuple(configs))

    @property
    def full(self) -> SparsityConfig:
        return self.configs[0]

    @property
    def sparse(self) -> tuple[SparsityConfig, ...]:
        return self.configs[1:]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.configs]

    def get(self, name: str) -> SparsityConfig:
        for c in self.configs:
            if c.name == name:
                return c
        raise UnknownConfigError(name, self.names)

    def validate_for(self, weight_names: Iterable[str]) -> None:
        """Every prunable weight must match exactly one pattern in every config."""
        names = list(weight_names)
        for c in self.configs:
            for n in names:
                c.level_for(n)

    def ordered_sparse(self, weight_sizes: Mapping[str, int]) -> list[SparsityConfig]:
        """C1..CL by ascending average sparsity (stable for ties)."""
        return sorted(self.sparse, key=lambda c: c.average_sparsity(weight_sizes))

    def restricted_to(self, names: Iterable[str]) -> SparsityPlan:
        """The full config plus the named sparse configs, in plan order."""
        wanted = set(names)
        for n in wanted:
            self.get(n)
        return SparsityPlan((self.full, *(c for c in self.sparse if c.name in wanted)))

    def to_dict(self) -> list[dict[str, Any]]:
        return [c.model_dump() for c in self.configs]

    @classmethod
    def from_dict(cls, data: list[dict[str, Any]]) -> SparsityPlan:
        return cls(tuple(SparsityConfig(**d) for d in data))
