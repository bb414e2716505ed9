"""
dsnn CLI: training, evaluation and benchmarks for dynamic-sparsity models.

Usage:
    dsnn --dump-defaults                         Print the default config
    dsnn pretrain [-c CONFIG]                    Dense pretraining
    dsnn train-dsnn --pretrained DIR             One super-network for the whole plan
    dsnn train-single --pretrained DIR           One model per sparse config
    dsnn train-snn --pretrained DIR              Structured-mask baseline
    dsnn eval CHECKPOINT CONFIG_NAME             Metrics of one sub-network
    dsnn compare CKPT CKPT [...]                 Comparison table
    dsnn bench                                   Dense vs block-sparse matvec timing
    dsnn ablate --pretrained DIR                 Four-row ablation grid + table
    dsnn pipeline [--snn]                        pretrain -> dsnn -> single (-> snn) -> compare

Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import TYPE_CHECKING, NoReturn

from dsnn.errors import EXIT_USAGE, DsnnError

if TYPE_CHECKING:
    from dsnn.config import ExperimentConfig
    from dsnn.data.synthetic import SyntheticDataset
    from dsnn.training.supernet import SuperNetwork

logger = logging.getLogger("dsnn.cli")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _print(msg: str = "", style: str = "") -> None:
    """Print with optional rich styling."""
    if style:
        from rich import print as rprint
        rprint(f"[{style}]{msg}[/{style}]")
    else:
        print(msg)


def _setup_logging(level: str | None) -> None:
    from rich.logging import RichHandler

    from dsnn.config import Runtime

    name = (level or Runtime.from_env().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format="%(message)s",
        handlers=[RichHandler(show_path=False, markup=False)],
        force=True,
    )


class _ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(args: argparse.Namespace) -> ExperimentConfig:
    from dsnn.config import load_config

    return load_config(Path(args.config) if args.config else None)


def _out_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    return Path(args.out) if args.out else config.output_dir()


def _save(net: SuperNetwork, out: Path, name: str, config: ExperimentConfig) -> Path:
    from dsnn.checkpoint import save_checkpoint
    from dsnn.training.metrics import write_records

    path = save_checkpoint(net, out / name, data_config=config.data_params(),
                           export_dtype=config.train.export_dtype)
    write_records(out / f"{name}.metrics.csv", net.history)
    _print(f"  {name}: {path}", "green")
    return path


def _train_data(config: ExperimentConfig) -> SyntheticDataset:
    return config.datasets()[0]


def _print_summary() -> None:
    from dsnn.training.metrics import get_metrics

    s = get_metrics().get_summary()
    _print(
        f"{s['steps']} steps, {s['mask_refreshes']} mask refreshes, "
        f"p50 {s['step_ms_p50']:.1f} ms/step, p95 {s['step_ms_p95']:.1f} ms/step",
        "dim",
    )
    by_config = ", ".join(f"{name} {n}" for name, n in s["mask_refreshes_by_config"].items())
    if by_config:
        _print(f"mask refreshes by config: {by_config}", "dim")


def _print_rows(rows: list, title: str) -> None:
    from rich.console import Console
    from rich.table import Table

    from dsnn.report import COMPARE_FIELDS

    table = Table(title=title)
    for f in COMPARE_FIELDS:
        table.add_column(f)
    for r in rows:
        table.add_row(r.type, r.sparsity, r.model, f"{r.loss:.4f}", f"{r.accuracy:.4f}",
                      str(r.params), f"{r.average:.3f}")
    Console().print(table)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_pretrain(args: argparse.Namespace) -> int:
    """Dense pretraining; writes the 'pretrain' checkpoint."""
    from dsnn.training.trainer import pretrain

    config = _load(args)
    model = config.build_model()
    tp = config.train_plan(config.build_plan(model))
    steps = args.steps if args.steps is not None else config.train.pretrain_steps
    net = pretrain(model, _train_data(config), steps, tp)
    _save(net, _out_dir(args, config), args.name or "pretrain", config)
    _print_summary()
    return 0


def _load_pretrained(args: argparse.Namespace) -> SuperNetwork:
    from dsnn.checkpoint import load_checkpoint

    return load_checkpoint(Path(args.pretrained))


def cmd_train_dsnn(args: argparse.Namespace) -> int:
    """Train one super-network for every configuration of the plan."""
    from dsnn.training.trainer import train_dsnn

    config = _load(args)
    pretrained = _load_pretrained(args)
    tp = config.train_plan(config.build_plan(pretrained.model))
    changes: dict[str, object] = {}
    if args.no_distillation:
        changes["distillation"] = False
    if args.no_lazy_update:
        changes["lazy_update"] = False
    if args.freeze_steps is not None:
        changes["freeze_steps"] = args.freeze_steps
    tp = tp.replace(**changes)
    net = train_dsnn(pretrained, _train_data(config), tp)
    _save(net, _out_dir(args, config), args.name or "dsnn", config)
    _print_summary()
    return 0


def cmd_train_single(args: argparse.Namespace) -> int:
    """Train separate single-sparsity baselines."""
    from dsnn.training.trainer import train_single_sparsity

    config = _load(args)
    pretrained = _load_pretrained(args)
    tp = config.train_plan(config.build_plan(pretrained.model))
    targets = args.target or [c.name for c in tp.plan.sparse]
    data = _train_data(config)
    out = _out_dir(args, config)
    for name in targets:
        net = train_single_sparsity(pretrained, data, name, tp)
        _save(net, out, f"single-{name}", config)
    _print_summary()
    return 0


def cmd_train_snn(args: argparse.Namespace) -> int:
    """Train the structured-mask baseline."""
    from dsnn.training.trainer import train_snn_baseline

    config = _load(args)
    pretrained = _load_pretrained(args)
    tp = config.train_plan(config.build_plan(pretrained.model))
    net = train_snn_baseline(pretrained, _train_data(config), tp)
    _save(net, _out_dir(args, config), args.name or "snn", config)
    _print_summary()
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate one configuration of a checkpoint. Read-only."""
    from rich.console import Console
    from rich.table import Table

    from dsnn.checkpoint import load_checkpoint, read_manifest
    from dsnn.report import eval_dataset
    from dsnn.training.trainer import evaluate

    path = Path(args.checkpoint)
    net = load_checkpoint(path)
    result = evaluate(net, args.config_name, eval_dataset(read_manifest(path)["data"]))

    table = Table(title=f"{net.label} @ {result.config}")
    table.add_column("weight")
    table.add_column("sparsity")
    for w, s in result.weight_sparsity.items():
        table.add_row(w, f"{s:.4f}")
    Console().print(table)
    _print(
        f"loss={result.loss:.6f} accuracy={result.accuracy:.4f} "
        f"sparsity={result.sparsity:.4f} params={result.parameters}",
        "bold",
    )
    return 0


def _compare_and_report(
    nets: list[SuperNetwork],
    data_config: dict,
    ablation: bool,
    csv_path: Path | None,
    markdown_path: Path | None,
) -> None:
    from dsnn.report import compare, eval_dataset, rows_to_markdown, write_report

    rows = compare(nets, eval_dataset(data_config), ablation=ablation)
    _print_rows(rows, "Ablation" if ablation else "Comparison")
    write_report(rows, csv_path, markdown_path)
    if csv_path is None and markdown_path is None:
        _print(rows_to_markdown(rows))


def cmd_compare(args: argparse.Namespace) -> int:
    """Compare checkpoints config by config."""
    from dsnn.checkpoint import load_checkpoint, read_manifest

    paths = [Path(p) for p in args.checkpoints]
    nets = [load_checkpoint(p) for p in paths]
    data_configs = [read_manifest(p)["data"] for p in paths]
    if any(d != data_configs[0] for d in data_configs[1:]):
        logger.warning("checkpoints record different data configs; evaluating on the first one's")
    _compare_and_report(
        nets, data_configs[0], args.ablation,
        Path(args.csv) if args.csv else None,
        Path(args.markdown) if args.markdown else None,
    )
    return 0


def _parse_list(text: str, kind: Callable[[str], float | int]) -> list:
    try:
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def cmd_bench(args: argparse.Namespace) -> int:
    """Time dense vs block-sparse matvec."""
    from dsnn.config import Runtime
    from dsnn.sparse.bench import bench_speedup, rows_to_csv
    from dsnn.sparse.bsr import set_kernel_threads

    config = _load(args)
    b = config.bench
    threads = set_kernel_threads(Runtime.from_env().threads)
    _print(f"Benchmarking with {threads} kernel threads", "dim")
    rows = bench_speedup(
        args.sizes or b.sizes,
        args.sparsities or b.sparsities,
        block_height=args.block_height or b.block_height,
        reps=args.reps or b.reps,
        warmup=b.warmup,
        seed=config.experiment.seed,
    )
    text = rows_to_csv(rows)
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(args.csv).write_text(text)
        _print(f"Wrote {args.csv}", "green")
    else:
        _print(text)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    """Train the ablation grid and compare it."""
    from dsnn.training.trainer import run_ablation

    config = _load(args)
    pretrained = _load_pretrained(args)
    tp = config.train_plan(config.build_plan(pretrained.model))
    out = _out_dir(args, config)
    nets = run_ablation(pretrained, _train_data(config), tp)
    for label, net in nets.items():
        _save(net, out, f"ablate-{label.lstrip('+')}", config)
    _compare_and_report(list(nets.values()), config.data_params(), True,
                        out / "ablation.csv", out / "ablation.md")
    _print_summary()
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    """Full run: pretrain, DSNN, single-sparsity baselines, optional SNN, comparison."""
    from dsnn.training.trainer import run_pipeline

    config = _load(args)
    model = config.build_model()
    tp = config.train_plan(config.build_plan(model))
    out = _out_dir(args, config)
    nets = run_pipeline(model, _train_data(config), tp, config.train.pretrain_steps, with_snn=args.snn)
    for name, net in nets.items():
        _save(net, out, name, config)
    compared = [net for name, net in nets.items() if name != "pretrain"]
    _compare_and_report(compared, config.data_params(), False, out / "compare.csv", out / "compare.md")
    _print_summary()
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML config file (default: $DSNN_HOME/config.toml)")
    common.add_argument("--log-level", default=None, help="Log level (default: $DSNN_LOG_LEVEL or INFO)")

    output = _ArgumentParser(add_help=False)
    output.add_argument("--out", help="Output directory (default: experiment.output_dir)")
    output.add_argument("--name", help="Checkpoint directory name")

    pretrained = _ArgumentParser(add_help=False)
    pretrained.add_argument("--pretrained", required=True, help="Pretrain checkpoint directory")

    parser = _ArgumentParser(
        prog="dsnn",
        description="dsnn: one model, many sparsity levels.",
    )
    parser.add_argument("--dump-defaults", action="store_true", help="Print the default config and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("pretrain", parents=[common, output], help="Dense pretraining")
    p.add_argument("--steps", type=int, default=None, help="Override train.pretrain_steps")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train-dsnn", parents=[common, output, pretrained], help="Train a DSNN super-network")
    p.add_argument("--no-distillation", action="store_true", help="Train sparse configs on labels")
    p.add_argument("--no-lazy-update", action="store_true", help="Step after every config")
    p.add_argument("--freeze-steps", type=int, default=None, help="Override train.freeze_steps")
    p.set_defaults(func=cmd_train_dsnn)

    p = sub.add_parser("train-single", parents=[common, output, pretrained], help="Single-sparsity baselines")
    p.add_argument("--target", action="append", help="Sparse config to train (repeatable; default all)")
    p.set_defaults(func=cmd_train_single)

    p = sub.add_parser("train-snn", parents=[common, output, pretrained], help="Structured-mask baseline")
    p.set_defaults(func=cmd_train_snn)

    p = sub.add_parser("eval", parents=[common], help="Evaluate one config of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config_name")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="Compare checkpoints")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--ablation", action="store_true", help="Order rows as the ablation grid")
    p.add_argument("--csv", help="Write the table as CSV")
    p.add_argument("--markdown", help="Write the table as markdown")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", parents=[common], help="Dense vs block-sparse matvec timing")
    p.add_argument("--sizes", type=lambda s: _parse_list(s, int), help="Comma-separated sizes")
    p.add_argument("--sparsities", type=lambda s: _parse_list(s, float), help="Comma-separated sparsities")
    p.add_argument("--block-height", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--csv", help="Write results to this CSV file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", parents=[common, output, pretrained], help="Ablation grid")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("pipeline", parents=[common, output], help="Full experiment")
    p.add_argument("--snn", action="store_true", help="Also train the structured-mask baseline")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    """CLI entry point. Returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.dump_defaults:
        from dsnn.config import dump_defaults

        print(dump_defaults(), end="")
        return 0
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    try:
        _setup_logging(args.log_level)
        return int(args.func(args))
    except DsnnError as e:
        _print(f"error: {e}", "bold red")
        logger.debug("command failed", exc_info=True)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
