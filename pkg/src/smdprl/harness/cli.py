"""Command-line entry point.

Subcommands: ``oracle``, ``train-online``, ``gen-data``, ``train-offline``,
``evaluate``, ``gradcheck``, ``plot-data``.  Exit codes: 0 success,
1 usage/config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from ..agents import ALL_ALGORITHMS, Algorithm
from ..gridworld import variant_by_name
from . import experiments
from .config import ConfigError, load_config
from .metrics import emit_plot_data, read_metrics


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; remap to 1
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="smdprl", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub, variant_default="online"):
        sub.add_argument("--config", type=Path, default=None, help="flat YAML config file")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        sub.add_argument("--variant", default=variant_default, choices=["online", "offline"])
        sub.add_argument("--out", type=Path, required=True, help="run directory")
        sub.add_argument("--force", action="store_true", help="allow reuse of a non-empty run dir")

    oracle = commands.add_parser("oracle", help="exact value-iteration table")
    common(oracle)
    oracle.add_argument("--tolerance", type=float, default=1e-12)

    online = commands.add_parser("train-online", help="learning-curve sweep")
    common(online)
    online.add_argument(
        "--algo", default="all",
        help="algorithm name or 'all' (sdqn, sddqn, sbcq, dqn, ddqn, bcq)",
    )

    gen = commands.add_parser("gen-data", help="generate offline buffers")
    common(gen, variant_default="offline")

    offline = commands.add_parser("train-offline", help="train on one offline buffer")
    offline.add_argument("--config", type=Path, default=None)
    offline.add_argument("--seed", type=int, default=None)
    offline.add_argument("--algo", required=True)
    offline.add_argument("--dataset", type=Path, required=True)
    offline.add_argument("--validation", type=Path, default=None)
    offline.add_argument("--out", type=Path, required=True)
    offline.add_argument("--force", action="store_true")

    evaluate = commands.add_parser("evaluate", help="greedy rollouts on the fixed test starts")
    common(evaluate, variant_default="offline")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--cloner", type=Path, default=None)
    evaluate.add_argument("--algo", default=None)
    evaluate.add_argument("--dataset", default=None, help="dataset descriptor for metrics rows")

    gradcheck = commands.add_parser("gradcheck", help="finite-difference gradient verification")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--instances", type=int, default=20)

    plot = commands.add_parser("plot-data", help="pivot metrics CSVs into figure data")
    plot.add_argument("--metrics", type=Path, nargs="+", required=True)
    plot.add_argument("--figure", choices=["2", "3"], required=True)
    plot.add_argument("--out", type=Path, required=True)
    return parser


def _algorithms_from_flag(flag: str) -> list[Algorithm]:
    if flag.lower() == "all":
        return list(ALL_ALGORITHMS)
    return [Algorithm.from_name(name) for name in flag.split(",")]


def _run(args: argparse.Namespace) -> int:
    if args.command == "gradcheck":
        report = experiments.run_gradcheck(seed=args.seed, n_instances=args.instances)
        print(
            f"gradcheck: {report['instances']} instances, "
            f"max relative error {report['max_relative_error']:.3e} "
            f"(tolerance {report['tolerance']:.0e})"
        )
        return 0 if report["passed"] else 2

    if args.command == "plot-data":
        rows = []
        for path in args.metrics:
            rows.extend(read_metrics(path))
        emit_plot_data(rows, f"figure{args.figure}", args.out)
        print(f"wrote {args.out}")
        return 0

    if args.command == "train-offline":
        out_dir = experiments.ensure_run_dir(args.out, args.force)
        outcome = experiments.run_train_offline(
            dataset_path=args.dataset,
            config_path=args.config,
            out_dir=out_dir,
            kind=Algorithm.from_name(args.algo),
            validation_path=args.validation,
            seed=args.seed,
        )
        best = outcome["result"].best_epoch
        print(f"{outcome['run_name']}: best epoch {best}, artifacts in {out_dir}")
        return 0

    variant = variant_by_name(args.variant)
    config = load_config(args.config, variant)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    out_dir = experiments.ensure_run_dir(args.out, args.force)

    if args.command == "oracle":
        summary = experiments.run_oracle(variant, out_dir, config, tolerance=args.tolerance)
        print(
            f"oracle[{variant.name}]: residual {summary['residual']:.3e}, "
            f"start value {summary['start_value']:.10f}, wrote {summary['checkpoint']}"
        )
        return 0

    if args.command == "train-online":
        algorithms = _algorithms_from_flag(args.algo)
        experiments.run_train_online(variant, config, algorithms, out_dir)
        print(f"train-online[{variant.name}]: {len(algorithms)} algorithms x "
              f"{config.seeds} seeds, artifacts in {out_dir}")
        return 0

    if args.command == "gen-data":
        paths = experiments.run_gen_data(variant, config, out_dir)
        print(f"gen-data[{variant.name}]: wrote {len(paths)} files to {out_dir}")
        return 0

    if args.command == "evaluate":
        kind = Algorithm.from_name(args.algo) if args.algo else None
        summary = experiments.run_evaluate(
            checkpoint_path=args.checkpoint,
            variant=variant,
            config=config,
            out_dir=out_dir,
            kind=kind,
            cloner_path=args.cloner,
            dataset_label=args.dataset,
        )
        print(
            f"evaluate: mean test return {summary['mean_return']:.4f}, "
            f"default-start return {summary['default_start'].undiscounted_return:.4f}"
        )
        return 0

    raise UsageError(f"unknown command {args.command!r}")


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _run(args)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
