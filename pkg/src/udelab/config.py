"""Experiment configuration: a TOML file whose sections mirror the pipeline stages.

Unknown keys anywhere are rejected so a typo never silently falls back to a
default.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .datagen import DEFAULT_NOISE, INNER_RADIUS, OUTER_RADIUS
from .trainers import STAGE_LR, ConfigError, TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STAGES = ("source", "da", "kdde")
CSV_KEYS = ("source_train", "source_test", "target_train", "target_test")


@dataclass
class DataSection:
    n_pos: int = 100
    n_neg: int = 300
    noise_sd: float = DEFAULT_NOISE
    inner_radius: float = INNER_RADIUS
    outer_radius: float = OUTER_RADIUS
    shift: float = 0.4
    train_fraction: float = 0.5
    source_train: str | None = None
    source_test: str | None = None
    target_train: str | None = None
    target_test: str | None = None

    @property
    def from_csv(self) -> bool:
        return any(getattr(self, k) for k in CSV_KEYS)


@dataclass
class ModelSection:
    architecture: str = "toy"


@dataclass
class BoundarySpec:
    x_min: float = -1.5
    x_max: float = 2.0
    y_min: float = -1.5
    y_max: float = 1.5
    resolution: int = 100


@dataclass
class EvalSection:
    retrieval_n: int = 5
    boundary: BoundarySpec | None = None
    domain_classifier_epochs: int = 100


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/toy"
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: dict[str, TrainConfig] = field(default_factory=dict)
    eval: EvalSection = field(default_factory=EvalSection)

    def stage_config(self, stage: str) -> TrainConfig:
        return replace(self.train[stage], seed=self.seed)


def default_train(stage: str, seed: int = 0) -> TrainConfig:
    method = {"source": "source", "da": "cdan", "kdde": "source"}[stage]
    return TrainConfig(method=method, lr=STAGE_LR[stage], seed=seed)


def _build(cls, raw: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def parse_config(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    top = {"seed", "out_dir", "data", "model", "train", "eval"}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    data = _build(DataSection, dict(doc.get("data", {})), "data")
    model = _build(ModelSection, dict(doc.get("model", {})), "model")
    if model.architecture != "toy":
        raise ConfigError(f"[model] architecture must be 'toy', got {model.architecture!r}")

    raw_train = dict(doc.get("train", {}))
    unknown = sorted(set(raw_train) - set(STAGES))
    if unknown:
        raise ConfigError(f"unknown [train] stage(s): {', '.join(unknown)}")
    train = {}
    for stage in STAGES:
        section = dict(raw_train.get(stage, {}))
        if "seed" in section:
            raise ConfigError(f"[train.{stage}] takes its seed from the top-level 'seed'")
        base = default_train(stage, seed)
        allowed = {f.name for f in fields(TrainConfig)} - {"seed"}
        bad = sorted(set(section) - allowed)
        if bad:
            raise ConfigError(f"unknown key(s) in [train.{stage}]: {', '.join(bad)}")
        try:
            train[stage] = replace(base, **section)
        except TypeError as exc:
            raise ConfigError(f"[train.{stage}] {exc}") from None
        except ConfigError as exc:
            raise ConfigError(f"[train.{stage}] {exc}") from None
    if train["da"].method == "source":
        raise ConfigError("[train.da] method must be a domain adaptation method")

    raw_eval = dict(doc.get("eval", {}))
    boundary = raw_eval.pop("boundary", None)
    ev = _build(EvalSection, raw_eval, "eval")
    if boundary is not None:
        ev.boundary = _build(BoundarySpec, dict(boundary), "eval.boundary")
        if ev.boundary.resolution < 1:
            raise ConfigError("[eval.boundary] resolution must be >= 1")
    if ev.retrieval_n <= 0:
        raise ConfigError("[eval] retrieval_n must be positive")

    cfg = ExperimentConfig(seed, str(doc.get("out_dir", "runs/toy")), data, model, train, ev)
    validate(cfg, base_dir)
    return cfg


def validate(cfg: ExperimentConfig, base_dir: Path | None = None) -> None:
    d = cfg.data
    if d.n_pos <= 0 or d.n_neg <= 0:
        raise ConfigError("[data] n_pos and n_neg must be positive")
    if d.noise_sd < 0:
        raise ConfigError(f"[data] noise_sd must be >= 0, got {d.noise_sd}")
    if not 0 < d.inner_radius < d.outer_radius:
        raise ConfigError("[data] need 0 < inner_radius < outer_radius")
    if not 0 < d.train_fraction < 1:
        raise ConfigError(f"[data] train_fraction must lie in (0, 1), got {d.train_fraction}")
    if d.from_csv:
        missing = [k for k in CSV_KEYS if not getattr(d, k)]
        if missing:
            raise ConfigError(f"[data] CSV mode needs all of {CSV_KEYS}; missing {missing}")
        for k in CSV_KEYS:
            path = Path(getattr(d, k))
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
                setattr(d, k, str(path))
            if not path.exists():
                raise ConfigError(f"[data] {k} path does not exist: {path}")
    for stage, tc in cfg.train.items():
        try:
            tc.validate()
        except ConfigError as exc:
            raise ConfigError(f"[train.{stage}] {exc}") from None


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return parse_config({})
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc, path.parent)
