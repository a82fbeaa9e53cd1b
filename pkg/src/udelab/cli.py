"""Command-line entry point: ``udelab <command> [options]``.

Exit codes: 0 success, 2 configuration or usage error, 3 numeric divergence.
Set ``UDE_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment as ex
from .config import BoundarySpec, ExperimentConfig, load_config
from .metrics import boundary_csv, boundary_grid, export_features, features_csv
from .models import load_network, save_weights
from .trainers import ConfigError, DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3
log = logging.getLogger("udelab")


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _splits(args, cfg: ExperimentConfig) -> ex.Splits:
    return ex.load_splits(cfg, _out_dir(args, cfg) / "data")


def cmd_gen(args, cfg: ExperimentConfig) -> int:
    splits = ex.toy_splits(cfg.data, cfg.seed)
    for path in ex.write_splits(splits, _out_dir(args, cfg) / "data"):
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_train(args, cfg: ExperimentConfig) -> int:
    teacher_src = teacher_da = None
    if args.stage == "kdde":
        if not args.teacher_src or not args.teacher_da:
            args.parser.error("train --stage kdde requires --teacher-src and --teacher-da")
        teacher_src = load_network(args.teacher_src)
        teacher_da = load_network(args.teacher_da)
    out = _out_dir(args, cfg)
    result = ex.run_stage(args.stage, cfg, _splits(args, cfg), teacher_src, teacher_da)
    weights = out / f"{args.stage}.weights.json"
    save_weights(result.network, weights)
    result.record.weights = weights.name
    result.record.save(out / f"{args.stage}.run.json")
    if result.discriminator is not None:
        save_weights(result.discriminator, out / f"{args.stage}.discriminator.json")
    log.info("stage %s: %d epochs, weights in %s", args.stage, result.record.epochs_completed, weights)
    return EXIT_OK


def _model_name(path: str) -> str:
    name = Path(path).name
    for suffix in (".weights.json", ".json"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def cmd_eval(args, cfg: ExperimentConfig) -> int:
    if not args.weights and not (args.teacher_src and args.teacher_da):
        args.parser.error("eval needs --weights and/or both --teacher-src and --teacher-da")
    out = _out_dir(args, cfg)
    eval_dir = out / "eval"
    eval_dir.mkdir(exist_ok=True)
    splits = _splits(args, cfg)
    models = {_model_name(p): load_network(p) for p in args.weights or []}
    teacher_src = load_network(args.teacher_src) if args.teacher_src else None
    teacher_da = load_network(args.teacher_da) if args.teacher_da else None
    reports = ex.evaluate_models(models, splits, cfg, teacher_src, teacher_da)
    for name, rep in reports.items():
        (eval_dir / f"{name}.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        log.info("%s: %s expanded=%.4f", name, rep["per_domain_accuracy"], rep["expanded_accuracy"])
    if cfg.eval.boundary is not None:
        for name, net in models.items():
            _write_boundary(net, cfg, eval_dir / f"{name}.boundary.csv")
    return EXIT_OK


def _write_boundary(net, cfg: ExperimentConfig, path: Path) -> None:
    b = cfg.eval.boundary or BoundarySpec()
    grid = boundary_grid(net, (b.x_min, b.x_max), (b.y_min, b.y_max), b.resolution)
    path.write_text(boundary_csv(grid), encoding="utf-8")


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    try:
        lambdas = [float(v) for v in args.lambdas.split(",")]
        seeds = [int(v) for v in args.seeds.split(",")] if args.seeds else [cfg.seed]
    except ValueError as exc:
        raise ConfigError(f"bad --lambdas/--seeds list: {exc}") from None
    if any(lam < 0 for lam in lambdas):
        raise ConfigError("lambda values must be >= 0")
    rows = ex.sweep_lambda(cfg, lambdas, seeds, method=args.method, workers=args.workers)
    path = _out_dir(args, cfg) / "sweep_lambda.csv"
    path.write_text(ex.sweep_csv(rows), encoding="utf-8")
    log.info("wrote %s (%d rows)", path, len(rows))
    return EXIT_OK


def cmd_export_features(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    splits = _splits(args, cfg)
    for path in args.weights:
        net = load_network(path)
        parts = []
        for ds in (splits.source_test, splits.target_test):
            z, labels = export_features(net, ds)
            parts.append(features_csv(z, labels, ds.domains()))
        # one header, rows from both test sets
        text = parts[0] + "".join(p.split("\n", 1)[1] for p in parts[1:])
        (out / f"{_model_name(path)}.features.csv").write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_export_boundary(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    for path in args.weights:
        _write_boundary(load_network(path), cfg, out / f"{_model_name(path)}.boundary.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment config")
    common.add_argument("--seed", type=int, help="override the top-level seed")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config out_dir)")

    parser = argparse.ArgumentParser(prog="udelab", description="Unsupervised domain expansion lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write source/target train/test CSVs")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train one stage")
    p.add_argument("--stage", choices=("source", "da", "kdde"), required=True)
    p.add_argument("--teacher-src", metavar="PATH")
    p.add_argument("--teacher-da", metavar="PATH")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate models and baselines")
    p.add_argument("--weights", metavar="PATH", action="append")
    p.add_argument("--teacher-src", metavar="PATH", help="source model, enables baselines")
    p.add_argument("--teacher-da", metavar="PATH", help="adapted model, enables baselines")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-lambda", parents=[common], help="DA accuracy across trade-off weights")
    p.add_argument("--lambdas", default="0,0.01,0.1,1,10,20,100")
    p.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
    p.add_argument("--method", default="ddc", choices=("ddc", "dann", "cdan", "cdan_plus"))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-features", parents=[common], help="dump extractor features of the test sets")
    p.add_argument("--weights", metavar="PATH", action="append", required=True)
    p.set_defaults(func=cmd_export_features)

    p = sub.add_parser("export-boundary", parents=[common], help="dump a decision-boundary grid")
    p.add_argument("--weights", metavar="PATH", action="append", required=True)
    p.set_defaults(func=cmd_export_boundary)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("UDE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    args.parser = parser
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"--seed must be >= 0, got {args.seed}")
            cfg = replace(cfg, seed=args.seed)
        return args.func(args, cfg)
    except (ValueError, FileNotFoundError) as exc:  # ConfigError and DataError included
        print(f"udelab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"udelab: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
