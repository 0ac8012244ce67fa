"""Command-line interface.

Subcommands: eval, train, grid, ablate, perturb, validate-data.  Exit codes:
0 on success, 1 when any record failed during a run, 2 on configuration or
schema errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .backends import RemoteBackendError
from .data import DatasetError, load_dataset
from .evaluation import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_BETA_GRID,
    BackendKind,
    ConfigError,
    MissingG,
    Mode,
    RunConfig,
    ablation,
    build_backends,
    config_from_dict,
    grid_search,
    perturbation_benchmark,
    render_ablation_table,
    render_grid_table,
    report_json,
    run_eval,
    write_report,
)
from .synth import record_to_train_example
from .training import save_projections, train


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--data", type=Path, help="JSONL dataset path")
    p.add_argument("--out", type=Path, help="output report path")
    p.add_argument("--seed", type=int, help="root seed (overrides config)")
    p.add_argument("--alpha", type=float, help="similarity sharpness")
    p.add_argument("--beta", type=float, help="posterior sharpness in [0, 1]")
    p.add_argument("--k", type=int, help="top-K size")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="evaluation mode")
    p.add_argument("--backend", choices=[b.value for b in BackendKind], help="model backend")
    p.add_argument("--endpoint", help="remote backend base URL")
    p.add_argument("--projections", type=Path, help="trained projections JSON")
    p.add_argument("--corpus", type=Path, help="toy generator corpus path")
    p.add_argument("--missing-g", choices=[m.value for m in MissingG],
                   help="fallback when a record lacks generated knowledge")
    p.add_argument("--jobs", type=int, help="record-level parallelism")


def _load_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        config = config_from_dict(raw)
    else:
        config = RunConfig()

    hyper_overrides = {
        name: getattr(args, name)
        for name in ("seed", "alpha", "beta", "k")
        if getattr(args, name, None) is not None
    }
    if hyper_overrides:
        try:
            config = dataclasses.replace(
                config, hyper=dataclasses.replace(config.hyper, **hyper_overrides)
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "mode", None):
        config = dataclasses.replace(config, mode=Mode(args.mode))
    if getattr(args, "backend", None):
        config = dataclasses.replace(config, backend=BackendKind(args.backend))
    if getattr(args, "missing_g", None):
        config = dataclasses.replace(config, missing_g=MissingG(args.missing_g))
    if getattr(args, "projections", None):
        config = dataclasses.replace(config, projections_path=str(args.projections))
    if getattr(args, "endpoint", None):
        config = dataclasses.replace(
            config, remote=dataclasses.replace(config.remote, endpoint=args.endpoint)
        )
    if getattr(args, "corpus", None):
        config = dataclasses.replace(
            config, toy=dataclasses.replace(config.toy, corpus_path=str(args.corpus))
        )
    if getattr(args, "jobs", None):
        config = dataclasses.replace(config, jobs=args.jobs)
    # keep the training hyper-parameters in sync with the effective hyper;
    # an explicit train.k from the config file survives unless --k was given
    train_updates = {"hyper": config.hyper}
    if getattr(args, "k", None) is not None:
        train_updates["k"] = args.k
    config = dataclasses.replace(
        config, train=dataclasses.replace(config.train, **train_updates)
    )
    return config


def _require_data(args: argparse.Namespace, flag: str = "--data") -> Path:
    path = getattr(args, flag.lstrip("-").replace("-", "_"))
    if path is None:
        raise ConfigError(f"{flag} is required for this subcommand")
    return path


def _emit(report: dict, out: Path | None) -> None:
    if out:
        write_report(report, out)
        print(f"report written to {out}")
    else:
        print(report_json(report), end="")


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args)
    records = load_dataset(_require_data(args))
    encoder, generator = build_backends(config)
    report = run_eval(records, config, encoder, generator)
    _emit(report, args.out)
    corpus = report["corpus"]
    print(
        f"mode={report['mode']} records={corpus['n_records']} "
        f"p@1={corpus['p_at_1']} p@{corpus['k']}={corpus['p_at_k']} "
        f"unigram_f1={corpus['unigram_f1']} ppl={corpus['ppl']}",
        file=sys.stderr,
    )
    if report["failures"]:
        for failure in report["failures"]:
            print(f"record {failure['id']} failed: {failure['error']}", file=sys.stderr)
        return 1
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    train_config = config.train
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    if args.init_scale is not None:
        overrides["init_scale"] = args.init_scale
    if args.noisy is not None:
        overrides["noisy"] = args.noisy
    if overrides:
        try:
            train_config = dataclasses.replace(train_config, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    records = load_dataset(_require_data(args))
    examples = [record_to_train_example(r) for r in records]
    encoder, generator = build_backends(config)
    report = train(examples, train_config, encoder, generator)
    out = args.out or Path("projections.json")
    save_projections(out, report, train_config)
    print(f"projections written to {out}")
    print(
        f"epochs={train_config.epochs} noisy={train_config.noisy} "
        f"nll {report.per_epoch_nll[0]:.6f} -> {report.per_epoch_nll[-1]:.6f}",
        file=sys.stderr,
    )
    return 0


def _parse_grid(text: str | None, default: list[float], label: str) -> list[float]:
    if text is None:
        return default
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid {label} grid {text!r}") from exc
    if not values:
        raise ConfigError(f"{label} grid is empty")
    return values


def cmd_grid(args: argparse.Namespace) -> int:
    config = _load_config(args)
    records = load_dataset(_require_data(args))
    encoder, generator = build_backends(config)
    alpha_grid = _parse_grid(args.alpha_grid, DEFAULT_ALPHA_GRID, "alpha")
    beta_grid = _parse_grid(args.beta_grid, DEFAULT_BETA_GRID, "beta")
    report = grid_search(records, alpha_grid, beta_grid, config, encoder, generator)
    _emit(report, args.out)
    print(render_grid_table(report), file=sys.stderr)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    eval_records = load_dataset(_require_data(args))
    train_records = load_dataset(_require_data(args, "--train-data"))
    encoder, generator = build_backends(config)
    report = ablation(eval_records, train_records, config, encoder, generator)
    _emit(report, args.out)
    print(render_ablation_table(report), file=sys.stderr)
    return 0


def cmd_perturb(args: argparse.Namespace) -> int:
    config = _load_config(args)
    test_records = load_dataset(_require_data(args))
    train_records = load_dataset(_require_data(args, "--train-data"))
    encoder, generator = build_backends(config)
    report = perturbation_benchmark(train_records, test_records, config, encoder, generator)
    _emit(report, args.out)
    for cell, values in report["cells"].items():
        print(
            f"{cell}: p@k={values['p_at_k']:.4f} "
            f"nll/token={values['marginal_nll_per_token']:.4f}",
            file=sys.stderr,
        )
    return 0


def cmd_validate_data(args: argparse.Namespace) -> int:
    records = load_dataset(_require_data(args))
    print(f"{args.data}: {len(records)} records, all valid")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisykag",
        description="Knowledge-grounded conversation pipeline with a noisy "
        "generated-knowledge source",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a dataset under one mode")
    _add_common_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_train = sub.add_parser("train", help="train selector projections")
    _add_common_flags(p_train)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--lr", dest="learning_rate", type=float)
    p_train.add_argument("--init-scale", type=float)
    noisy_group = p_train.add_mutually_exclusive_group()
    noisy_group.add_argument("--noisy", dest="noisy", action="store_true", default=None)
    noisy_group.add_argument("--clean", dest="noisy", action="store_false", default=None)
    p_train.set_defaults(func=cmd_train)

    p_grid = sub.add_parser("grid", help="alpha/beta grid search")
    _add_common_flags(p_grid)
    p_grid.add_argument("--alpha-grid", help="comma-separated alpha values")
    p_grid.add_argument("--beta-grid", help="comma-separated beta values")
    p_grid.set_defaults(func=cmd_grid)

    p_ablate = sub.add_parser("ablate", help="three-row cumulative ablation")
    _add_common_flags(p_ablate)
    p_ablate.add_argument("--train-data", type=Path, help="training JSONL path")
    p_ablate.set_defaults(func=cmd_ablate)

    p_perturb = sub.add_parser("perturb", help="clean-vs-noisy training A/B benchmark")
    _add_common_flags(p_perturb)
    p_perturb.add_argument("--train-data", type=Path, help="training JSONL path")
    p_perturb.set_defaults(func=cmd_perturb)

    p_validate = sub.add_parser("validate-data", help="validate a JSONL dataset")
    _add_common_flags(p_validate)
    p_validate.set_defaults(func=cmd_validate_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RemoteBackendError, RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
