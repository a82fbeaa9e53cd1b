"""Source-only training, domain adaptation and two-teacher distillation."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import SGD
from .datagen import Dataset
from .losses import (
    KD_VARIANTS,
    cdan_condition,
    classification_loss,
    ddc_loss,
    domain_adversarial_loss,
    kd_loss,
    multi_domain_adversarial_loss,
)
from .models import Discriminator, Network, build_toy_backbone, build_toy_discriminator, grl_forward
from .seeding import stream

METHODS = ("source", "ddc", "dann", "cdan", "cdan_plus")
DA_METHODS = METHODS[1:]
# initial learning rate per stage; distillation runs hotter
STAGE_LR = {"source": 0.001, "da": 0.001, "kdde": 0.005}


class ConfigError(ValueError):
    """A training configuration violates its invariants."""


class DivergenceError(RuntimeError):
    """A loss became NaN or infinite during training."""


@dataclass
class TrainConfig:
    method: str = "source"
    lambda_tradeoff: float | str = 10.0
    max_epochs: int = 300
    batch_size: int = 64
    lr: float = 0.001
    lr_step_epochs: int = 0
    lr_decay_factor: float = 1.0
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    kd_variant: str = "kl"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if isinstance(self.lambda_tradeoff, str):
            if self.lambda_tradeoff != "dynamic":
                raise ConfigError(f"lambda_tradeoff must be a number or 'dynamic', got {self.lambda_tradeoff!r}")
        elif not (self.lambda_tradeoff >= 0 and math.isfinite(self.lambda_tradeoff)):
            raise ConfigError(f"lambda_tradeoff must be >= 0, got {self.lambda_tradeoff}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        # every toy network carries batch norm
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 with batch norm, got {self.batch_size}")
        if not self.lr >= 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.lr_step_epochs < 0:
            raise ConfigError(f"lr_step_epochs must be >= 0, got {self.lr_step_epochs}")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigError(f"lr_decay_factor must lie in (0, 1], got {self.lr_decay_factor}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.kd_variant not in KD_VARIANTS:
            raise ConfigError(f"kd_variant must be one of {KD_VARIANTS}, got {self.kd_variant!r}")


@dataclass
class RunRecord:
    stage: str
    config: dict
    losses: dict[str, list[float]] = field(default_factory=dict)
    epochs_completed: int = 0
    wall_clock: float = 0.0
    weights: str | None = None

    def log(self, name: str, value: float) -> None:
        self.losses.setdefault(name, []).append(value)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> RunRecord:
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class TrainResult:
    network: Network
    record: RunRecord
    discriminator: Discriminator | None = None


# --------------------------------------------------------------------------
# schedules


def lambda_schedule(progress: float, mode: float | str = "dynamic") -> float:
    """Trade-off weight at training progress ``progress`` in [0, 1].

    ``mode="dynamic"`` ramps as 2 / (1 + exp(-10 p)) - 1; a number is returned
    unchanged.
    """
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    if mode == "dynamic":
        return 2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0
    return float(mode)


def lr_schedule(epoch: int, base_lr: float, step_epochs: int = 0, factor: float = 1.0) -> float:
    """Step decay: ``base_lr * factor ** (epoch // step_epochs)``; ``step_epochs=0`` disables it."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if step_epochs <= 0:
        return base_lr
    return base_lr * factor ** (epoch // step_epochs)


# --------------------------------------------------------------------------
# batching


def iterations_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One reshuffled pass without replacement, ``ceil(n / batch_size)`` batches.

    A trailing single-row batch is folded into its predecessor since batch
    norm cannot train on one row.
    """
    perm = rng.permutation(n)
    batches = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


class CyclingSampler:
    """Endless reshuffled sampling without replacement; refills when exhausted."""

    def __init__(self, n: int, rng: np.random.Generator):
        if n <= 0:
            raise ValueError("cannot sample from an empty set")
        self.n = n
        self.rng = rng
        self._perm = rng.permutation(n)
        self._pos = 0

    def next(self, size: int) -> np.ndarray:
        out = []
        need = size
        while need > 0:
            if self._pos == self.n:
                self._perm = self.rng.permutation(self.n)
                self._pos = 0
            take = min(need, self.n - self._pos)
            out.append(self._perm[self._pos : self._pos + take])
            self._pos += take
            need -= take
        return np.concatenate(out)


# --------------------------------------------------------------------------
# helpers


def _features(data) -> np.ndarray:
    feats = data.features if isinstance(data, Dataset) else data
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or len(feats) == 0:
        raise ValueError(f"expected a non-empty n x d feature matrix, got shape {feats.shape}")
    return feats


def _check_finite(record: RunRecord, **values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise DivergenceError(
                f"{record.stage}: loss {name} became {v} at epoch {record.epochs_completed + 1}"
            )


def _guard(record: RunRecord, name: str, value: float) -> float:
    if not math.isfinite(value):
        raise DivergenceError(f"{record.stage}: loss {name} became {value} in epoch {record.epochs_completed + 1}")
    return value


def _snapshot(config: TrainConfig) -> dict:
    return asdict(config)


def _init_network(config: TrainConfig, input_dim: int, class_count: int, init: Network | None) -> Network:
    if init is not None:
        return init.copy()
    return build_toy_backbone(stream(config.seed, "init"), input_dim, class_count)


# --------------------------------------------------------------------------
# trainers


def train_source(config: TrainConfig, source: Dataset, init: Network | None = None) -> TrainResult:
    """Mini-batch SGD on the source classification loss alone."""
    if not source.labeled:
        raise ValueError("train_source needs a labeled source dataset")
    started = time.perf_counter()
    x, y = source.features, source.labels
    net = _init_network(config, source.d, source.k, init)
    opt = SGD(net.parameters(), config.lr, config.momentum, config.weight_decay)
    batch_rng = stream(config.seed, "batching")
    record = RunRecord("source", _snapshot(config))

    for epoch in range(config.max_epochs):
        opt.lr = lr_schedule(epoch, config.lr, config.lr_step_epochs, config.lr_decay_factor)
        clf_sum, n_iter = 0.0, 0
        for idx in epoch_batches(len(x), config.batch_size, batch_rng):
            out = net(x[idx], train=True)
            loss = classification_loss(out.logits, y[idx])
            _guard(record, "clf", loss.value)
            ad.backward(loss.scalar)
            opt.step()
            clf_sum += loss.value
            n_iter += 1
        clf = clf_sum / n_iter
        _check_finite(record, clf=clf)
        record.log("clf", clf)
        record.log("total", clf)
        record.epochs_completed += 1

    record.wall_clock = time.perf_counter() - started
    return TrainResult(net, record)


def _domain_groups(target: Dataset) -> tuple[np.ndarray, list[str]]:
    tags = target.domains()
    names = sorted(set(tags.tolist()))
    lookup = {name: i + 1 for i, name in enumerate(names)}
    return np.array([lookup[t] for t in tags], dtype=np.int64), names


def train_da(
    config: TrainConfig,
    source: Dataset,
    target: Dataset,
    init: Network | None = None,
) -> TrainResult:
    """Joint minimization of source classification plus lambda times a domain loss.

    Each iteration stacks a source and a target mini-batch into one forward
    pass, so batch norm statistics see both domains.  Adversarial methods
    couple the discriminator through gradient reversal and share one
    optimizer step with the backbone.
    """
    if config.method not in DA_METHODS:
        raise ConfigError(f"train_da needs a domain adaptation method, got {config.method!r}")
    if not source.labeled:
        raise ValueError("train_da needs a labeled source dataset")
    started = time.perf_counter()
    xs, ys = source.features, source.labels
    xt = _features(target)  # target labels are never read
    if xt.shape[1] != xs.shape[1]:
        raise ValueError(f"source width {xs.shape[1]} != target width {xt.shape[1]}")
    net = _init_network(config, source.d, source.k, init)

    disc = None
    target_domain_index = None
    if config.method in ("dann", "cdan", "cdan_plus"):
        width = net.feature_dim if config.method == "dann" else net.feature_dim * net.class_count
        m = 1
        if config.method == "cdan_plus":
            target_domain_index, names = _domain_groups(target)
            m = 1 + len(names)
        disc = build_toy_discriminator(width, stream(config.seed, "disc"), output_classes=m)

    params = net.parameters() + (disc.parameters() if disc else [])
    opt = SGD(params, config.lr, config.momentum, config.weight_decay)
    batch_rng = stream(config.seed, "batching")
    target_sampler = CyclingSampler(len(xt), stream(config.seed, "target-batching"))
    record = RunRecord("da", _snapshot(config))

    iters = iterations_per_epoch(len(xs), config.batch_size)
    total_iters = max(1, iters * config.max_epochs)
    step = 0
    for epoch in range(config.max_epochs):
        opt.lr = lr_schedule(epoch, config.lr, config.lr_step_epochs, config.lr_decay_factor)
        sums = {"clf": 0.0, "da": 0.0, "total": 0.0, "lambda": 0.0}
        batches = epoch_batches(len(xs), config.batch_size, batch_rng)
        for idx_s in batches:
            idx_t = target_sampler.next(config.batch_size)
            n_s = len(idx_s)
            out = net(np.vstack([xs[idx_s], xt[idx_t]]), train=True)
            src_rows, tgt_rows = slice(0, n_s), slice(n_s, None)
            clf = classification_loss(out.logits[src_rows], ys[idx_s])
            _guard(record, "clf", clf.value)
            lam = lambda_schedule(min(step / total_iters, 1.0), config.lambda_tradeoff)
            da = _domain_loss(config.method, out, src_rows, tgt_rows, disc, target_domain_index, idx_t)
            total = ad.add(clf.scalar, ad.mul(da.scalar, lam))
            _guard(record, "total", total.item())
            ad.backward(total)
            opt.step()
            sums["clf"] += clf.value
            sums["da"] += da.value
            sums["total"] += total.item()
            sums["lambda"] += lam
            step += 1
        means = {k: v / len(batches) for k, v in sums.items()}
        _check_finite(record, **means)
        for k, v in means.items():
            record.log(k, v)
        record.epochs_completed += 1

    record.wall_clock = time.perf_counter() - started
    return TrainResult(net, record, disc)


def _domain_loss(method, out, src_rows, tgt_rows, disc, target_domain_index, idx_t):
    z = out.features
    if method == "ddc":
        return ddc_loss(z[src_rows], z[tgt_rows])
    if method == "dann":
        d_in = grl_forward(z, 1.0)
    else:
        d_in = grl_forward(cdan_condition(z, out.probs), 1.0)
    d_out = disc(d_in)
    if method == "cdan_plus":
        n_s = src_rows.stop
        domain_index = np.concatenate([np.zeros(n_s, dtype=np.int64), target_domain_index[idx_t]])
        return multi_domain_adversarial_loss(d_out, domain_index)
    return domain_adversarial_loss(d_out[src_rows], d_out[tgt_rows])


def teacher_probs(teacher: Network, x: np.ndarray) -> np.ndarray:
    """Soft labels from a frozen teacher: eval mode, no graph, no state change."""
    return teacher(x, train=False).probs.data


def train_kdde(
    config: TrainConfig,
    teacher_s: Network,
    teacher_da: Network,
    x_s,
    x_t,
    init: Network | None = None,
) -> TrainResult:
    """Distil the source teacher (on source inputs) and the adapted teacher (on
    target inputs) into one fresh student using soft labels only."""
    if teacher_s.class_count != teacher_da.class_count:
        raise ValueError(
            f"teacher class counts differ: {teacher_s.class_count} vs {teacher_da.class_count}"
        )
    started = time.perf_counter()
    xs, xt = _features(x_s), _features(x_t)
    k = teacher_s.class_count
    student = _init_network(config, xs.shape[1], k, init)
    if student.class_count != k:
        raise ValueError(f"student has {student.class_count} classes, teachers have {k}")

    # teachers are frozen and in eval mode, so their soft labels are fixed per example
    soft_s = teacher_probs(teacher_s, xs)
    soft_t = teacher_probs(teacher_da, xt)

    opt = SGD(student.parameters(), config.lr, config.momentum, config.weight_decay)
    record = RunRecord("kdde", _snapshot(config))
    src_larger = len(xs) >= len(xt)
    epoch_rng = stream(config.seed, "batching")
    cycler = CyclingSampler(len(xt) if src_larger else len(xs), stream(config.seed, "cycle-batching"))
    n_major = max(len(xs), len(xt))

    for epoch in range(config.max_epochs):
        opt.lr = lr_schedule(epoch, config.lr, config.lr_step_epochs, config.lr_decay_factor)
        sums = {"kd_source": 0.0, "kd_target": 0.0, "kd": 0.0}
        batches = epoch_batches(n_major, config.batch_size, epoch_rng)
        for major in batches:
            minor = cycler.next(len(major))
            idx_s, idx_t = (major, minor) if src_larger else (minor, major)
            n_s = len(idx_s)
            out = student(np.vstack([xs[idx_s], xt[idx_t]]), train=True)
            kd_s = kd_loss(soft_s[idx_s], out.probs[slice(0, n_s)], config.kd_variant)
            kd_t = kd_loss(soft_t[idx_t], out.probs[slice(n_s, None)], config.kd_variant)
            total = ad.add(kd_s.scalar, kd_t.scalar)
            _guard(record, "kd", total.item())
            ad.backward(total)
            opt.step()
            sums["kd_source"] += kd_s.value
            sums["kd_target"] += kd_t.value
            sums["kd"] += total.item()
        means = {name: v / len(batches) for name, v in sums.items()}
        _check_finite(record, **means)
        for name, v in means.items():
            record.log(name, v)
        record.epochs_completed += 1

    record.wall_clock = time.perf_counter() - started
    return TrainResult(student, record)
