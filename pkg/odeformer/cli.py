from __future__ import annotations

from typing import List, Optional

import typer
from rich.console import Console
from rich.table import Table

from . import __version__
from .config import NetworkConfig, load_run_config
from .errors import OdeformerError
from .harness import SCOPES, compare_variants, evaluate, gradcheck_cmd, train
from .integrators import (
    DEFAULT_HORIZON,
    EXPECTED_ORDER,
    linear_field,
    measure_order,
    transformer_test_field,
    within_expected_order,
)
from .network import count_parameters
from .tensor import Tensor
from .utils.logger import get_logger
from .utils.perf import timed

app = typer.Typer(add_completion=False, no_args_is_help=True, help="Parallel and sequential transformer blocks as ODE steps.")
console = Console()
log = get_logger("odeformer.cli")


def _fail(e: Exception) -> None:
    console.print(f"❌ {e}")
    raise typer.Exit(1)


@app.command()
def version() -> None:
    console.print(f"odeformer {__version__}")


@app.command("train")
def train_cmd(
    config: Optional[str] = typer.Option(None, help="JSON run config; flags override its values"),
    preset: Optional[str] = typer.Option(None, help="deit_ti | nlp_small"),
    task: Optional[str] = typer.Option(None, help="classify | lm"),
    variant: Optional[str] = typer.Option(None, help="sequential | parallel"),
    norm: Optional[str] = typer.Option(None, help="A | B | C | none"),
    scheme: Optional[str] = typer.Option(None, help="euler | rk4"),
    independent_layers: Optional[int] = typer.Option(None, help="Number of distinct parameter sets k"),
    depth: Optional[int] = typer.Option(None),
    dim: Optional[int] = typer.Option(None),
    heads: Optional[int] = typer.Option(None),
    mlp_ratio: Optional[float] = typer.Option(None),
    steps_per_layer: Optional[int] = typer.Option(None),
    steps: Optional[int] = typer.Option(None, help="Stop after this many optimizer steps"),
    epochs: Optional[int] = typer.Option(None),
    batch_size: Optional[int] = typer.Option(None),
    lr: Optional[float] = typer.Option(None),
    warmup: Optional[int] = typer.Option(None),
    weight_decay: Optional[float] = typer.Option(None),
    seed: Optional[int] = typer.Option(None),
    dropout: Optional[float] = typer.Option(None),
    stoch_depth: Optional[float] = typer.Option(None),
    dataset: Optional[str] = typer.Option(None, help="Image file (classify) or text corpus (lm)"),
    out_dir: Optional[str] = typer.Option(None),
    eval_interval: Optional[int] = typer.Option(None),
    image_size: Optional[int] = typer.Option(None),
    patch_size: Optional[int] = typer.Option(None),
    channels: Optional[int] = typer.Option(None),
    num_classes: Optional[int] = typer.Option(None),
    vocab_size: Optional[int] = typer.Option(None),
    context_length: Optional[int] = typer.Option(None),
    init_std: Optional[float] = typer.Option(None),
    train_samples: Optional[int] = typer.Option(None, help="Synthetic training images"),
    val_samples: Optional[int] = typer.Option(None, help="Synthetic validation images"),
    val_fraction: Optional[float] = typer.Option(None, help="Held-out tail of a dataset file"),
    lm_stride: Optional[int] = typer.Option(None, help="Start offset between LM training windows"),
    eval_batch_size: Optional[int] = typer.Option(None),
    prefetch: Optional[int] = typer.Option(None, help="Batches loaded ahead; 0 loads inline"),
    cosine_decay: Optional[bool] = typer.Option(None, "--cosine-decay/--no-cosine-decay"),
) -> None:
    """Train a network and write metrics.log, best.ckpt and last.ckpt."""
    try:
        run = load_run_config(
            config,
            {
                "network": {
                    "preset": preset, "task": task, "variant": variant, "norm_variant": norm,
                    "scheme": scheme, "independent_layers": independent_layers, "depth": depth,
                    "dim": dim, "heads": heads, "mlp_ratio": mlp_ratio, "steps_per_layer": steps_per_layer,
                    "image_size": image_size, "patch_size": patch_size, "channels": channels,
                    "num_classes": num_classes, "vocab_size": vocab_size, "context_length": context_length,
                    "init_std": init_std,
                },
                "train": {
                    "max_steps": steps, "epochs": epochs, "batch_size": batch_size, "lr": lr,
                    "warmup_steps": warmup, "weight_decay": weight_decay, "seed": seed,
                    "dropout_p": dropout, "stoch_depth_p": stoch_depth, "dataset_path": dataset,
                    "out_dir": out_dir, "eval_interval": eval_interval,
                    "train_samples": train_samples, "val_samples": val_samples, "val_fraction": val_fraction,
                    "lm_stride": lm_stride, "eval_batch_size": eval_batch_size, "prefetch": prefetch,
                    "cosine_decay": cosine_decay,
                },
            },
        )
        result = train(run.network, run.train)
    except (OdeformerError, ValueError) as e:
        _fail(e)
    console.print(f"✅ {result.final_val.to_log_line()}")
    console.print(f"   best: {result.best_path}\n   last: {result.last_path}")


@app.command("eval")
def eval_cmd(
    checkpoint: str = typer.Argument(..., help="Checkpoint written by train"),
    dataset: Optional[str] = typer.Option(None, help="Evaluate on this file instead of the training data"),
    batch_size: Optional[int] = typer.Option(None),
) -> None:
    """Validation metrics of a checkpoint in eval mode."""
    try:
        record = evaluate(checkpoint, dataset_path=dataset, batch_size=batch_size)
    except (OdeformerError, ValueError) as e:
        _fail(e)
    console.print(record.to_log_line())


@app.command("gradcheck")
def gradcheck_command(
    scope: List[str] = typer.Option(list(SCOPES), help="ops | block | network | rk4 (repeatable)"),
    seeds: int = typer.Option(10, min=1),
) -> None:
    """Compare tape gradients with central finite differences."""
    try:
        reports = gradcheck_cmd(scope, seeds)
    except OdeformerError as e:
        _fail(e)
    table = Table(title="gradcheck")
    for col in ("scope", "group", "worst rel err"):
        table.add_column(col)
    for report in reports:
        for group, err in report.worst_by_group().items():
            table.add_row(report.scope, group, f"{err:.2e}")
    console.print(table)
    failed = [f"{r.scope}:{case}" for r in reports for case in r.failures]
    if failed:
        console.print(f"❌ gradcheck failed: {', '.join(failed)}")
        raise typer.Exit(1)
    console.print("✅ gradcheck passed")


@app.command("param-count")
def param_count_cmd(
    preset: Optional[str] = typer.Option("deit_ti"),
    variant: Optional[str] = typer.Option(None),
    norm: Optional[str] = typer.Option(None),
    independent_layers: Optional[List[int]] = typer.Option(None, help="k values; default: every divisor of depth"),
    num_classes: Optional[int] = typer.Option(None),
    image_size: Optional[int] = typer.Option(None),
    patch_size: Optional[int] = typer.Option(None),
) -> None:
    """Parameter counts per number of independent layers."""
    try:
        base = NetworkConfig.model_validate(
            {
                "preset": preset, "variant": variant, "norm_variant": norm, "num_classes": num_classes,
                "image_size": image_size, "patch_size": patch_size,
            }
        )
        ks = independent_layers or [k for k in range(base.depth, 0, -1) if base.depth % k == 0]
        table = Table(title=f"parameters ({base.preset or 'custom'}, {base.variant}/{base.norm_variant})")
        note = None
        if base.variant == "parallel" and base.norm_variant in ("A", "C"):
            note = f"one norm per layer: {2 * base.dim} fewer per layer than sequential or norm B"
        table.add_column("k", justify="right")
        table.add_column("parameters", justify="right")
        table.add_column("millions", justify="right")
        with timed("param-count"):
            for k in ks:
                n = count_parameters(base.model_copy(update={"independent_layers": k}))
                table.add_row(str(k), f"{n:,}", f"{n / 1e6:.2f}M")
    except (OdeformerError, ValueError) as e:
        _fail(e)
    console.print(table)
    if note:
        console.print(note, soft_wrap=True)


@app.command("order-check")
def order_check_cmd(
    field: str = typer.Option("linear", help="linear | transformer"),
    scheme: Optional[List[str]] = typer.Option(None, help="euler | rk4 (repeatable); default both"),
    horizon: Optional[float] = typer.Option(None, help="Integration horizon; default 0.25 (linear) or 0.5 (transformer)"),
    lam: float = typer.Option(-1.0, help="Rate of the linear field"),
    seed: int = typer.Option(0),
) -> None:
    """Empirical convergence order of Euler and RK4."""
    try:
        if field == "linear":
            f, x0 = linear_field(lam), Tensor([1.0])
            span = horizon or DEFAULT_HORIZON
        elif field == "transformer":
            f, x0 = transformer_test_field(seed)
            span = horizon or 0.5
        else:
            raise typer.BadParameter(f"unknown field {field!r}")
        results = [measure_order(f, s, x0, horizon=span) for s in (scheme or list(EXPECTED_ORDER))]  # type: ignore[arg-type]
    except OdeformerError as e:
        _fail(e)
    table = Table(title=f"convergence order ({field} field, horizon {span})")
    for col in ("scheme", "errors", "order", "expected", "ok"):
        table.add_column(col)
    ok = True
    for m in results:
        lo, hi = EXPECTED_ORDER[m.scheme]
        good = within_expected_order(m)
        ok = ok and good
        table.add_row(m.scheme, " ".join(f"{e:.2e}" for e in m.errors), m.describe(), f"[{lo}, {hi}]", "✅" if good else "❌")
    console.print(table)
    if not ok:
        raise typer.Exit(1)


@app.command()
def compare(
    seeds: int = typer.Option(5, min=1),
    steps: int = typer.Option(100, min=1),
    out_dir: str = typer.Option("runs/compare"),
) -> None:
    """Parallel (norm A) against the sequential baseline on the synthetic task."""
    try:
        rows, wins = compare_variants(range(seeds), steps, out_dir=out_dir)
    except OdeformerError as e:
        _fail(e)
    table = Table(title=f"validation top-1 after {steps} steps")
    for col in ("seed", "parallel", "sequential"):
        table.add_column(col)
    for r in rows:
        table.add_row(str(r.seed), f"{r.parallel_top1:.4f}", f"{r.sequential_top1:.4f}")
    console.print(table)
    console.print(f"parallel >= sequential in {wins} of {len(rows)} seeds")


if __name__ == "__main__":
    app()
