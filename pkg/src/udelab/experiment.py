"""Orchestration shared by the CLI and the acceptance suite."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .baselines import SelectorSystem, ensemble_predict, oracle_select_predict, select_predict, train_domain_classifier
from .config import DataSection, ExperimentConfig
from .datagen import Dataset, generate_circles, load_csv, save_csv, shift, split
from .metrics import (
    accuracy,
    evaluate,
    evaluate_probs,
    expanded_accuracy,
    export_features,
    retrieval_precision,
)
from .models import Network
from .seeding import stream
from .trainers import TrainConfig, TrainResult, train_da, train_kdde, train_source

log = logging.getLogger("udelab")

SPLIT_NAMES = ("source_train", "source_test", "target_train", "target_test")


@dataclass
class Splits:
    source_train: Dataset
    source_test: Dataset
    target_train: Dataset
    target_test: Dataset

    def testsets(self) -> dict[str, Dataset]:
        return {"source": self.source_test, "target": self.target_test}

    def items(self):
        return [(name, getattr(self, name)) for name in SPLIT_NAMES]


def toy_splits(data: DataSection, seed: int) -> Splits:
    """Source circles and an independently drawn, shifted target, each split train/test.

    The target training split is unlabeled; its test split keeps labels for
    evaluation only.
    """
    src = generate_circles(
        data.n_pos, data.n_neg, data.noise_sd, stream(seed, "data-source"), "source",
        data.inner_radius, data.outer_radius,
    )
    tgt_raw = generate_circles(
        data.n_pos, data.n_neg, data.noise_sd, stream(seed, "data-target"), "target",
        data.inner_radius, data.outer_radius,
    )
    tgt = shift(tgt_raw, data.shift, keep_labels=True)
    s_tr, s_te = split(src, data.train_fraction, stream(seed, "split-source"))
    t_tr, t_te = split(tgt, data.train_fraction, stream(seed, "split-target"))
    return Splits(s_tr, s_te, t_tr.unlabeled(), t_te)


def load_splits(cfg: ExperimentConfig, data_dir: Path | None = None) -> Splits:
    """CSV paths from the config, else files written by ``gen``, else generate in memory."""
    d = cfg.data
    if d.from_csv:
        parts = {name: load_csv(getattr(d, name)) for name in SPLIT_NAMES}
    elif data_dir is not None and all((data_dir / f"{n}.csv").exists() for n in SPLIT_NAMES):
        parts = {name: load_csv(data_dir / f"{name}.csv") for name in SPLIT_NAMES}
    else:
        return toy_splits(d, cfg.seed)
    parts["target_train"] = parts["target_train"].unlabeled()
    return Splits(**parts)


def write_splits(splits: Splits, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, ds in splits.items():
        path = out_dir / f"{name}.csv"
        save_csv(ds, path)
        paths.append(path)
    return paths


def run_stage(
    stage: str,
    cfg: ExperimentConfig,
    splits: Splits,
    teacher_src: Network | None = None,
    teacher_da: Network | None = None,
) -> TrainResult:
    tc = cfg.stage_config(stage)
    if stage == "source":
        return train_source(tc, splits.source_train)
    if stage == "da":
        return train_da(tc, splits.source_train, splits.target_train)
    if stage == "kdde":
        if teacher_src is None or teacher_da is None:
            raise ValueError("kdde needs both teachers")
        return train_kdde(tc, teacher_src, teacher_da, splits.source_train.features, splits.target_train.features)
    raise ValueError(f"unknown stage {stage!r}")


def cross_domain_retrieval(net: Network, splits: Splits, n: int) -> dict[str, float]:
    zs, ys = export_features(net, splits.source_test)
    zt, yt = export_features(net, splits.target_test)
    return {
        f"source_on_target_p@{n}": retrieval_precision(zs, ys, zt, yt, n),
        f"target_on_source_p@{n}": retrieval_precision(zt, yt, zs, ys, n),
    }


def evaluate_models(
    models: dict[str, Network],
    splits: Splits,
    cfg: ExperimentConfig,
    teacher_src: Network | None = None,
    teacher_da: Network | None = None,
) -> dict[str, dict]:
    """EvalReports for each model, plus routed and fused baselines when both members are given."""
    tests = splits.testsets()
    reports: dict[str, dict] = {}
    for name, net in models.items():
        rep = evaluate(net, tests, model=name).to_dict()
        rep["retrieval"] = cross_domain_retrieval(net, splits, cfg.eval.retrieval_n)
        reports[name] = rep
    if teacher_src is not None and teacher_da is not None:
        oracle = {d: oracle_select_predict(d, teacher_src, teacher_da, ds) for d, ds in tests.items()}
        reports["oracle_selection"] = evaluate_probs(oracle, tests, "oracle_selection").to_dict()
        dc_cfg = replace(cfg.stage_config("source"), max_epochs=cfg.eval.domain_classifier_epochs)
        dclf = train_domain_classifier(splits.source_train, splits.target_train, dc_cfg)
        system = SelectorSystem(dclf, teacher_src, teacher_da)
        routed = {d: select_predict(system, ds) for d, ds in tests.items()}
        reports["model_selection"] = evaluate_probs(routed, tests, "model_selection").to_dict()
        fused = {d: ensemble_predict(teacher_src, teacher_da, ds) for d, ds in tests.items()}
        reports["ensemble"] = evaluate_probs(fused, tests, "ensemble").to_dict()
    return reports


# --------------------------------------------------------------------------
# lambda sweep

# absolute float tolerance; BN statistics count as different beyond 10x this
FLOAT_TOL = 1e-9
SWEEP_COLUMNS = (
    "lambda", "seed", "method", "source_acc", "target_acc", "expanded_acc", "bn_differs_from_source",
)


def bn_running_means(net: Network) -> np.ndarray:
    return np.concatenate([bn.running_mean for bn in net.batchnorms()])


def _sweep_cell(args) -> dict:
    cfg, method, lam, seed = args
    cell_cfg = replace(cfg, seed=seed)
    splits = load_splits(cell_cfg)
    source_model = run_stage("source", cell_cfg, splits).network
    tc: TrainConfig = replace(cell_cfg.stage_config("da"), method=method, lambda_tradeoff=lam)
    net = train_da(tc, splits.source_train, splits.target_train).network
    accs = {d: accuracy(net, ds) for d, ds in splits.testsets().items()}
    diff = np.max(np.abs(bn_running_means(net) - bn_running_means(source_model)))
    return {
        "lambda": lam,
        "seed": seed,
        "method": method,
        "source_acc": accs["source"],
        "target_acc": accs["target"],
        "expanded_acc": expanded_accuracy(accs),
        "bn_differs_from_source": bool(diff > 10 * FLOAT_TOL),
    }


def sweep_lambda(cfg: ExperimentConfig, lambdas, seeds, method: str = "ddc", workers: int = 1) -> list[dict]:
    """One DA run per (lambda, seed) cell; cells are independent and may run in parallel."""
    cells = [(cfg, method, float(lam), int(seed)) for lam in lambdas for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, cells))
    return [_sweep_cell(c) for c in cells]


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()

