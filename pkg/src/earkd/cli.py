"""Command-line pipeline: synth, preprocess, train, evaluate, report.

Exit codes: 0 success, 1 I/O or data error, 2 usage error. The root seed
comes from --seed, overridable by the EARKD_SEED environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .dataset.synth import SynthConfig
from .errors import ConfigNotFound, EarKDError, UsageError
from .models import ModelConfig
from .pipeline import run_evaluate, run_preprocess, run_report, run_synth, run_train
from .training import STRATEGIES, TrainConfig


def _resolve_seed(args: argparse.Namespace) -> int:
    env = os.environ.get("EARKD_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"EARKD_SEED must be an integer, got {env!r}") from exc
    return args.seed


def _load_train_config(path: str | None) -> TrainConfig:
    return TrainConfig() if path is None else TrainConfig.from_json(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earkd",
        description="Cross-modal distillation pipeline for ear-EEG sleep staging",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p_synth.add_argument("--config", help="synth config JSON (defaults used if omitted)")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--seed", type=int, default=0)

    p_pre = sub.add_parser("preprocess", help="filter, reject channels, derive inputs")
    p_pre.add_argument("--in", dest="in_dir", required=True, help="raw data directory")
    p_pre.add_argument("--out", required=True, help="output directory")

    p_train = sub.add_parser("train", help="train one LOSO fold")
    p_train.add_argument("--strategy", required=True, choices=STRATEGIES)
    p_train.add_argument("--arch", choices=("cnn", "transformer"), default="cnn")
    p_train.add_argument("--data", required=True, help="preprocessed data directory")
    p_train.add_argument("--fold", type=int, required=True,
                         help="held-out subject index")
    p_train.add_argument("--config", help="train config JSON")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--teacher", help="teacher checkpoint (kd-offline)")

    p_eval = sub.add_parser("evaluate", help="score a checkpoint on its held-out fold")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--fold", type=int, required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--embed", choices=("pca", "sne"),
                        help="also export a 2-D feature embedding CSV")
    p_eval.add_argument("--seed", type=int, default=0,
                        help="seed for the stochastic embedding")

    p_rep = sub.add_parser("report", help="aggregate metrics into one table")
    p_rep.add_argument("--runs", nargs="+", required=True,
                       help="evaluation output directories")
    p_rep.add_argument("--out", required=True, help="markdown table path")

    return parser


def _cmd_synth(args: argparse.Namespace) -> dict:
    if args.config is not None and not Path(args.config).is_file():
        raise ConfigNotFound(f"synth config not found: {args.config}")
    config = SynthConfig() if args.config is None else SynthConfig.from_json(args.config)
    return run_synth(config, args.out, _resolve_seed(args))


def _cmd_preprocess(args: argparse.Namespace) -> dict:
    return run_preprocess(args.in_dir, args.out)


def _cmd_train(args: argparse.Namespace) -> dict:
    return run_train(
        strategy=args.strategy,
        arch=args.arch,
        data_dir=args.data,
        fold=args.fold,
        out_dir=args.out,
        seed=_resolve_seed(args),
        train_config=_load_train_config(args.config),
        model_config=ModelConfig(arch=args.arch, seed=_resolve_seed(args)),
        teacher_checkpoint=args.teacher,
    )


def _cmd_evaluate(args: argparse.Namespace) -> dict:
    return run_evaluate(args.checkpoint, args.data, args.fold, args.out,
                        embed_method=args.embed, embed_seed=_resolve_seed(args))


def _cmd_report(args: argparse.Namespace) -> dict:
    return run_report(args.runs, args.out)


_HANDLERS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EarKDError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    json.dump(summary, sys.stdout, indent=2, default=str)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
