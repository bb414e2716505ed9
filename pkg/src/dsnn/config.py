"""
dsnn configuration.

Experiment settings: task, model, optimizer, training schedule, benchmark
grid and the sparsity plan. Built from defaults, then a TOML file, then
environment variables.

File grammar (a TOML subset): ``[section]`` headers and flat
``key = value`` lines. Sparsity configs are ``[plan.<Name>]`` tables whose
keys are weight-name glob patterns; table order is plan order and the first
table must be all zeros. See docs/configuration.md.
"""

from __future__ import annotations

import logging
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - Python 3.10 fallback to the stdlib backport
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from dsnn.data.synthetic import SyntheticDataset, generate
from dsnn.errors import ConfigError
from dsnn.models.base import Model
from dsnn.models.toy import build_model, build_toy_plan
from dsnn.pruning.plan import SparsityConfig, SparsityPlan
from dsnn.training.trainer import TrainPlan

logger = logging.getLogger("dsnn.config")

# ---------------------------------------------------------------------------
# Paths and environment
# ---------------------------------------------------------------------------

DSNN_HOME = Path(os.getenv("DSNN_HOME", Path.home() / ".dsnn"))
CONFIG_PATH = DSNN_HOME / "config.toml"


@dataclass(frozen=True)
class Runtime:
    """Process-level settings read from the environment."""

    home: Path
    threads: int | None
    log_level: str

    @classmethod
    def from_env(cls) -> Runtime:
        threads_env = os.getenv("DSNN_THREADS")
        threads = None
        if threads_env:
            try:
                threads = int(threads_env)
            except ValueError as e:
                raise ConfigError("DSNN_THREADS", f"must be an integer, got {threads_env!r}") from e
            if threads < 1:
                raise ConfigError("DSNN_THREADS", f"must be >= 1, got {threads}")
        return cls(
            home=Path(os.getenv("DSNN_HOME", Path.home() / ".dsnn")),
            threads=threads,
            log_level=os.getenv("DSNN_LOG_LEVEL", "INFO").upper(),
        )


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentSection(_Section):
    seed: int = Field(0, ge=0)
    task: Literal["clusters", "symbol-count"] = "clusters"
    model: Literal["mlp", "lstm"] = "mlp"
    output_dir: str = ""


class DataSection(_Section):
    n_train: int = Field(4096, ge=1)
    n_eval: int = Field(1024, ge=1)
    classes: int = Field(4, ge=2)
    # clusters
    dim: int = Field(64, ge=1)
    noise: float = Field(0.5, ge=0.0)
    # symbol-count
    seq_len: int = Field(8, ge=2)
    vocab: int = Field(4, ge=2)


class ModelSection(_Section):
    hidden: list[int] = Field(default_factory=lambda: [256, 256])
    lstm_hidden: int = Field(128, ge=1)
    projection: int = Field(32, ge=1)
    layers: int = Field(1, ge=1)
    forget_bias: float = 1.0
    min_prune_size: int = Field(0, ge=0)


class OptimSection(_Section):
    lr: float = Field(1e-3, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    warmup_steps: int = Field(0, ge=0)
    ema_decay: float = Field(0.999, gt=0.0, lt=1.0)


class TrainSection(_Section):
    pretrain_steps: int = Field(2000, ge=0)
    total_steps: int = Field(10_000, ge=1)
    freeze_steps: int = Field(1000, ge=0)
    # 0 = refresh masks only at the first step.
    mask_update_frequency: int = Field(100, ge=0)
    ramp_steps: int = Field(2000, ge=1)
    batch_size: int = Field(64, ge=1)
    block_height: int = Field(4, ge=1)
    distillation: bool = True
    lazy_update: bool = True
    ground_truth_mix: float = Field(0.0, ge=0.0, le=1.0)
    temperature: float = Field(1.0, gt=0.0)
    log_every: int = Field(100, ge=1)
    export_dtype: Literal["float64", "float32"] = "float64"


class BenchSection(_Section):
    sizes: list[int] = Field(default_factory=lambda: [256, 512, 1024])
    sparsities: list[float] = Field(default_factory=lambda: [0.0, 0.5, 0.7, 0.9])
    block_height: int = Field(16, ge=1)
    reps: int = Field(100, ge=100)
    warmup: int = Field(10, ge=0)


# ---------------------------------------------------------------------------
# Main config
# ---------------------------------------------------------------------------

class ExperimentConfig(_Section):
    """Top-level experiment configuration."""

    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    optim: OptimSection = Field(default_factory=OptimSection)
    train: TrainSection = Field(default_factory=TrainSection)
    bench: BenchSection = Field(default_factory=BenchSection)
    plan: dict[str, dict[str, float]] = Field(default_factory=dict)

    # ── Builders ──────────────────────────────────────────────────────

    def model_spec(self) -> dict[str, Any]:
        m, d = self.model, self.data
        common = {"seed": self.experiment.seed, "min_prune_size": m.min_prune_size, "classes": d.classes}
        if self.experiment.model == "mlp":
            input_dim = d.dim if self.experiment.task == "clusters" else d.seq_len
            return {"kind": "mlp", "input_dim": input_dim, "hidden": list(m.hidden), **common}
        if self.experiment.task != "symbol-count":
            raise ConfigError("experiment.model", "the lstm model needs the symbol-count task")
        return {
            "kind": "lstm", "vocab": d.vocab, "hidden": m.lstm_hidden, "projection": m.projection,
            "layers": m.layers, "forget_bias": m.forget_bias, **common,
        }

    def build_model(self) -> Model:
        return build_model(self.model_spec())

    def build_plan(self, model: Model) -> SparsityPlan:
        if not self.plan:
            return build_toy_plan(model)
        try:
            configs = [SparsityConfig(name=name, levels=levels) for name, levels in self.plan.items()]
        except ValidationError as e:
            raise _config_error(e, prefix="plan") from e
        plan = SparsityPlan.of(configs)
        plan.validate_for(model.prunable)
        return plan

    def data_params(self) -> dict[str, Any]:
        d = self.data
        params: dict[str, Any] = {"task": self.experiment.task, "seed": self.experiment.seed,
                                  "n_train": d.n_train, "n_eval": d.n_eval, "classes": d.classes}
        if self.experiment.task == "clusters":
            params.update(dim=d.dim, noise=d.noise)
        else:
            params.update(seq_len=d.seq_len, vocab=d.vocab)
        return params

    def datasets(self) -> tuple[SyntheticDataset, SyntheticDataset]:
        """(train, eval), disjoint."""
        p = self.data_params()
        task, seed = p.pop("task"), p.pop("seed")
        n_train, n_eval = p.pop("n_train"), p.pop("n_eval")
        try:
            full = generate(task, seed, n_train + n_eval, **p)
        except ValueError as e:
            raise ConfigError("data", str(e)) from e
        return full.split(n_eval)

    def output_dir(self, runtime: Runtime | None = None) -> Path:
        if self.experiment.output_dir:
            return Path(self.experiment.output_dir).expanduser()
        return (runtime or Runtime.from_env()).home / "runs"

    def train_plan(self, plan: SparsityPlan) -> TrainPlan:
        t, o = self.train, self.optim
        return TrainPlan(
            plan=plan,
            total_steps=t.total_steps,
            freeze_steps=t.freeze_steps,
            mask_update_frequency=t.mask_update_frequency or None,
            ramp_steps=t.ramp_steps,
            lr=o.lr,
            beta1=o.beta1,
            beta2=o.beta2,
            eps=o.eps,
            warmup_steps=o.warmup_steps,
            ema_decay=o.ema_decay,
            batch_size=t.batch_size,
            block_height=t.block_height,
            seed=self.experiment.seed,
            distillation=t.distillation,
            lazy_update=t.lazy_update,
            ground_truth_mix=t.ground_truth_mix,
            temperature=t.temperature,
            log_every=t.log_every,
        )

# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _config_error(e: ValidationError, prefix: str = "") -> ConfigError:
    err = e.errors()[0]
    key = ".".join(str(p) for p in (prefix, *err["loc"]) if p != "")
    reason = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
    return ConfigError(key or "config", reason)


def parse_config(data: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise _config_error(e) from e


def load_config(config_path: Path | None = None) -> ExperimentConfig:
    """
    Build config from defaults → TOML file → environment variables.

    An explicit ``config_path`` must exist; the default path is optional.
    ``DSNN_SEED`` overrides ``experiment.seed``.
    """
    data: dict[str, Any] = {}
    path = config_path or CONFIG_PATH
    if config_path is not None and not path.exists():
        raise ConfigError(str(path), "config file not found")
    if path.exists():
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(str(path), f"invalid TOML: {e}") from e
        logger.debug(f"Loaded config from {path}")

    if os.getenv("DSNN_SEED"):
        data.setdefault("experiment", {})["seed"] = os.getenv("DSNN_SEED")

    return parse_config(data)


# ---------------------------------------------------------------------------
# Defaults dump
# ---------------------------------------------------------------------------

def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int | float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot render {type(v).__name__} as TOML")


def render_toml(config: ExperimentConfig, plan: SparsityPlan | None = None) -> str:
    lines: list[str] = []
    data = config.model_dump(exclude={"plan"})
    for section, values in data.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in values.items())
        lines.append("")
    plan_tables = plan.to_dict() if plan is not None else [
        {"name": n, "levels": lv} for n, lv in config.plan.items()
    ]
    for table in plan_tables:
        lines.append(f"[plan.{table['name']}]")
        lines.extend(f"{_toml_value(p)} = {_toml_value(s)}" for p, s in table["levels"].items())
        lines.append("")
    return "\n".join(lines)


def dump_defaults() -> str:
    """The complete default configuration, including the toy plan, as TOML."""
    config = ExperimentConfig()
    return render_toml(config, build_toy_plan(config.build_model()))


# ---------------------------------------------------------------------------
# Global singleton
# ---------------------------------------------------------------------------

_config: ExperimentConfig | None = None


def get_config() -> ExperimentConfig:
    global _config
    if _config is None:
        _config = load_config()
    return _config
