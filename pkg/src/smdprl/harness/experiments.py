"""Experiment drivers behind the CLI subcommands.

Every driver writes into a run-private directory: the resolved config,
a metrics CSV, and whatever checkpoints the run produces.  Re-running
with the same config and seed reproduces every artifact byte for byte.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Sequence

from .. import agents, approx, data, gridworld, tabular
from ..agents import Algorithm
from ..core import RunConfig, child_seed
from ..gridworld import EnvVariant
from . import checkpoint as ckpt
from .config import config_hash, resolved_config_text
from .metrics import MetricsRow, emit_plot_data, write_metrics

CONFIG_FILENAME = "resolved_config.txt"


def ensure_run_dir(path: str | Path, force: bool = False) -> Path:
    """Create the run directory; refuse to reuse a non-empty one without force."""
    run_dir = Path(path)
    if run_dir.exists() and any(run_dir.iterdir()) and not force:
        raise FileExistsError(
            f"run directory {run_dir} is not empty; pass --force to overwrite"
        )
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _write_resolved_config(run_dir: Path, config: RunConfig, variant: EnvVariant | None) -> None:
    (run_dir / CONFIG_FILENAME).write_text(resolved_config_text(config, variant), encoding="utf-8")


def select_model(loss_trace: Sequence[float], checkpoints: Sequence) -> tuple[int, object]:
    """Index and checkpoint with the minimal loss; earliest index on ties."""
    if len(loss_trace) == 0:
        raise ValueError("loss trace is empty")
    if len(loss_trace) != len(checkpoints):
        raise ValueError("loss trace and checkpoints must align")
    best = 0
    for index, loss in enumerate(loss_trace):
        if loss < loss_trace[best]:
            best = index
    return best, checkpoints[best]


def run_oracle(
    variant: EnvVariant,
    out_dir: Path,
    config: RunConfig,
    tolerance: float = 1e-12,
) -> dict:
    table = tabular.smdp_value_iteration(variant, tolerance=tolerance)
    residual = tabular.bellman_residual(table, variant)
    digest = config_hash(config, variant)
    ckpt.save_checkpoint(
        ckpt.from_table(table, digest, config.seed), out_dir / "oracle.ckpt"
    )
    _write_resolved_config(out_dir, config, variant)
    start_index = gridworld.state_index(gridworld.DEFAULT_START)
    rows = [
        MetricsRow("oracle", config.seed, "oracle", f"{variant.name}-env", 0, "bellman_residual", residual),
        MetricsRow(
            "oracle", config.seed, "oracle", f"{variant.name}-env", 0,
            "optimal_start_value", table.state_value(start_index),
        ),
    ]
    write_metrics(rows, out_dir / "metrics.csv")
    return {
        "residual": residual,
        "start_value": table.state_value(start_index),
        "checkpoint": out_dir / "oracle.ckpt",
    }


def _online_run_rows(
    run_name: str, seed: int, kind: Algorithm, variant: EnvVariant, result: agents.OnlineResult
) -> list[MetricsRow]:
    dataset = f"{variant.name}-env"
    rows = []
    for index, point in enumerate(result.eval_trace):
        rows.append(
            MetricsRow(run_name, seed, kind.value, dataset, index,
                       "eval_return_undiscounted", point.undiscounted_return)
        )
        rows.append(
            MetricsRow(run_name, seed, kind.value, dataset, index,
                       "eval_return_discounted", point.discounted_return)
        )
        rows.append(
            MetricsRow(run_name, seed, kind.value, dataset, index,
                       "eval_reached_goal", 1.0 if point.reached_goal else 0.0)
        )
    return rows


def run_train_online(
    variant: EnvVariant,
    config: RunConfig,
    algorithms: Sequence[Algorithm],
    out_dir: Path,
) -> dict:
    """Learning-curve sweep: every algorithm across ``config.seeds`` seeds."""
    _write_resolved_config(out_dir, config, variant)
    digest = config_hash(config, variant)
    rows: list[MetricsRow] = []
    final_returns: dict[tuple[str, int], float] = {}
    for kind in algorithms:
        for offset in range(config.seeds):
            seed = config.seed + offset
            run_config = dataclasses.replace(config, seed=seed)
            result = agents.train_online(kind, variant, run_config)
            run_name = f"online-{kind.value}-seed{seed}"
            rows.extend(_online_run_rows(run_name, seed, kind, variant, result))
            final = agents.rollout(
                agents.greedy_policy(kind, result.net, result.cloner, config.bcq_threshold),
                variant,
                option_cap=config.episode_step_cap,
            )
            rows.append(
                MetricsRow(run_name, seed, kind.value, f"{variant.name}-env",
                           len(result.eval_trace), "final_return_discounted",
                           final.discounted_return)
            )
            final_returns[(kind.value, seed)] = final.discounted_return
            ckpt.save_checkpoint(
                ckpt.from_mlp(result.net, "main", digest, seed, epoch=result.gradient_steps),
                out_dir / f"{run_name}-main.ckpt",
            )
            if result.cloner is not None:
                ckpt.save_checkpoint(
                    ckpt.from_mlp(result.cloner.net, "cloner", digest, seed,
                                  epoch=result.gradient_steps),
                    out_dir / f"{run_name}-cloner.ckpt",
                )
    write_metrics(rows, out_dir / "metrics.csv")
    emit_plot_data(rows, "figure2", out_dir / "figure2.csv")
    return {"rows": rows, "final_returns": final_returns}


def run_gen_data(variant: EnvVariant, config: RunConfig, out_dir: Path) -> list[Path]:
    """All size-by-mix training buffers plus the configured validation buffer(s)."""
    _write_resolved_config(out_dir, config, variant)
    oracle = tabular.smdp_value_iteration(variant)
    written: list[Path] = []
    for size in config.dataset_sizes:
        for p_random in config.random_fractions:
            mix = data.BehaviorMix(p_random, config.second_best_fraction)
            seed = child_seed(config.seed, "dataset", variant.name, size, p_random)
            dataset = data.generate_dataset(variant, oracle, mix, size, seed)
            path = out_dir / f"{dataset.provenance.descriptor}.smdpds"
            data.serialize(dataset, path)
            written.append(path)
            if config.validation_scheme == "same-composition":
                matched = data.matched_validation_dataset(
                    variant, oracle, mix, config.seed, config.validation_size
                )
                matched_path = out_dir / f"validation-{dataset.provenance.descriptor}.smdpds"
                data.serialize(matched, matched_path)
                written.append(matched_path)
    if config.validation_scheme == "fixed":
        shared = data.fixed_validation_dataset(variant, oracle, config.validation_size)
        shared_path = out_dir / "validation-fixed.smdpds"
        data.serialize(shared, shared_path)
        written.append(shared_path)
    return written


def run_train_offline(
    dataset_path: Path,
    config_path: Path | None,
    out_dir: Path,
    kind: Algorithm,
    validation_path: Path | None = None,
    seed: int | None = None,
) -> dict:
    """One offline training run with validation-loss model selection."""
    from .config import load_config

    dataset = data.deserialize(dataset_path)
    variant = gridworld.variant_by_name(dataset.provenance.variant_name)
    config = load_config(config_path, variant)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    validation = data.deserialize(validation_path) if validation_path is not None else None
    if validation is not None and validation.provenance.variant_name != variant.name:
        raise ValueError(
            f"validation buffer variant {validation.provenance.variant_name!r} "
            f"does not match training variant {variant.name!r}"
        )
    result = agents.train_offline(kind, dataset, config, validation)
    _write_resolved_config(out_dir, config, variant)
    digest = config_hash(config, variant)
    descriptor = dataset.provenance.descriptor
    run_name = f"offline-{kind.value}-{descriptor}-seed{config.seed}"
    rows: list[MetricsRow] = []
    for epoch, loss in enumerate(result.train_losses):
        rows.append(MetricsRow(run_name, config.seed, kind.value, descriptor, epoch, "train_loss", loss))
    for epoch, loss in enumerate(result.validation_losses):
        rows.append(
            MetricsRow(run_name, config.seed, kind.value, descriptor, epoch, "validation_loss", loss)
        )
    write_metrics(rows, out_dir / "metrics.csv")
    ckpt.save_checkpoint(
        ckpt.from_mlp(result.final_net, "main", digest, config.seed, epoch=config.epochs - 1),
        out_dir / "main_final.ckpt",
    )
    ckpt.save_checkpoint(
        ckpt.from_mlp(result.best_net, "main", digest, config.seed, epoch=result.best_epoch),
        out_dir / "main_best.ckpt",
    )
    if result.cloner is not None:
        ckpt.save_checkpoint(
            ckpt.from_mlp(result.cloner.net, "cloner", digest, config.seed, epoch=config.epochs - 1),
            out_dir / "cloner.ckpt",
        )
    return {"result": result, "run_name": run_name, "descriptor": descriptor}


def _policy_from_checkpoints(
    main_checkpoint: ckpt.Checkpoint,
    kind: Algorithm | None,
    cloner_checkpoint: ckpt.Checkpoint | None,
    tau: float,
):
    if main_checkpoint.kind == ckpt.TABLE_KIND:
        return ckpt.to_table(main_checkpoint).greedy_policy()
    if kind is None:
        raise ValueError("--algo is required when evaluating a network checkpoint")
    net = ckpt.to_mlp(main_checkpoint)
    cloner = None
    if kind.needs_cloner:
        if cloner_checkpoint is None:
            raise ValueError(f"{kind.value} evaluation requires a cloner checkpoint")
        cloner = agents.BehaviorCloner(ckpt.to_mlp(cloner_checkpoint))
    return agents.greedy_policy(kind, net, cloner, tau)


def run_evaluate(
    checkpoint_path: Path,
    variant: EnvVariant,
    config: RunConfig,
    out_dir: Path,
    kind: Algorithm | None = None,
    cloner_path: Path | None = None,
    dataset_label: str | None = None,
    run_name: str | None = None,
) -> dict:
    """Greedy rollouts over the ten fixed test starts plus the default start."""
    main_checkpoint = ckpt.load_checkpoint(checkpoint_path)
    cloner_checkpoint = ckpt.load_checkpoint(cloner_path) if cloner_path is not None else None
    policy = _policy_from_checkpoints(main_checkpoint, kind, cloner_checkpoint, config.bcq_threshold)
    algo_name = kind.value if kind is not None else main_checkpoint.kind
    label = dataset_label or f"{variant.name}-env"
    name = run_name or f"evaluate-{algo_name}-{label}-seed{main_checkpoint.seed}"
    rows: list[MetricsRow] = []
    returns = []
    for index, start in enumerate(data.FIXED_TEST_STARTS):
        result = agents.rollout(policy, variant, start, option_cap=config.episode_step_cap)
        returns.append(result.undiscounted_return)
        rows.append(
            MetricsRow(name, main_checkpoint.seed, algo_name, label, index,
                       "test_return", result.undiscounted_return)
        )
        rows.append(
            MetricsRow(name, main_checkpoint.seed, algo_name, label, index,
                       "test_return_discounted", result.discounted_return)
        )
    mean_return = sum(returns) / len(returns)
    rows.append(
        MetricsRow(name, main_checkpoint.seed, algo_name, label, 0, "test_return_mean", mean_return)
    )
    default_result = agents.rollout(policy, variant, option_cap=config.episode_step_cap)
    rows.append(
        MetricsRow(name, main_checkpoint.seed, algo_name, label, 0,
                   "default_start_return", default_result.undiscounted_return)
    )
    rows.append(
        MetricsRow(name, main_checkpoint.seed, algo_name, label, 0,
                   "default_start_return_discounted", default_result.discounted_return)
    )
    _write_resolved_config(out_dir, config, variant)
    write_metrics(rows, out_dir / "metrics.csv")
    return {"mean_return": mean_return, "default_start": default_result, "rows": rows}


def run_gradcheck(seed: int = 0, n_instances: int = 20) -> dict:
    return approx.run_gradient_check(n_instances=n_instances, seed=seed)
