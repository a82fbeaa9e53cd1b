"""Concentric-circles source domain, shifted target domain, splits and CSV I/O."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

# make_circles(factor=0.5) layout; the 0.4 target shift is comparable to the ring gap
INNER_RADIUS = 0.5
OUTER_RADIUS = 1.0
DEFAULT_NOISE = 0.05


class DataError(ValueError):
    """Malformed dataset contents or an impossible split."""


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None
    domain: str | np.ndarray
    k: int = 2

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise DataError(f"features must be an n x d matrix, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise DataError("features contain non-finite values")
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (len(feats),):
                raise DataError(f"expected {len(feats)} labels, got shape {labels.shape}")
            if len(labels) and (labels.min() < 0 or labels.max() >= self.k):
                raise DataError(f"labels must lie in [0, {self.k})")
            object.__setattr__(self, "labels", labels)
        if not isinstance(self.domain, str):
            domains = np.asarray(self.domain, dtype=object)
            if domains.shape != (len(feats),):
                raise DataError(f"expected {len(feats)} domain tags, got shape {domains.shape}")
            object.__setattr__(self, "domain", domains)

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def domains(self) -> np.ndarray:
        """Per-row domain tag."""
        if isinstance(self.domain, str):
            return np.full(self.n, self.domain, dtype=object)
        return self.domain

    def subset(self, rows) -> Dataset:
        rows = np.asarray(rows)
        labels = None if self.labels is None else self.labels[rows]
        domain = self.domain if isinstance(self.domain, str) else self.domain[rows]
        return Dataset(self.features[rows], labels, domain, self.k)

    def unlabeled(self) -> Dataset:
        return replace(self, labels=None)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.k != other.k or self.features.shape != other.features.shape:
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        same_labels = self.labels is None or np.array_equal(self.labels, other.labels)
        return (
            np.array_equal(self.features, other.features)
            and same_labels
            and np.array_equal(self.domains(), other.domains())
        )


def concat_datasets(parts: list[Dataset]) -> Dataset:
    if not parts:
        raise DataError("nothing to concatenate")
    k = parts[0].k
    labels = None
    if all(p.labeled for p in parts):
        labels = np.concatenate([p.labels for p in parts])
    return Dataset(
        np.concatenate([p.features for p in parts]),
        labels,
        np.concatenate([p.domains() for p in parts]),
        k,
    )


def generate_circles(
    n_pos: int,
    n_neg: int,
    noise_sd: float = DEFAULT_NOISE,
    seed: int | np.random.Generator = 0,
    domain: str = "source",
    inner_radius: float = INNER_RADIUS,
    outer_radius: float = OUTER_RADIUS,
) -> Dataset:
    """Positives (label 1) on the inner circle, negatives (label 0) on the outer one.

    Angles are uniform; radii get additive Gaussian noise.  Rows are ordered
    positives first.
    """
    if n_pos <= 0 or n_neg <= 0:
        raise DataError(f"class counts must be positive, got n_pos={n_pos}, n_neg={n_neg}")
    if noise_sd < 0 or not math.isfinite(noise_sd):
        raise DataError(f"noise_sd must be a finite value >= 0, got {noise_sd}")
    if not 0 < inner_radius < outer_radius:
        raise DataError(f"need 0 < inner_radius < outer_radius, got {inner_radius}, {outer_radius}")
    rng = np.random.default_rng(seed)

    def ring(count: int, radius: float) -> np.ndarray:
        theta = rng.uniform(0.0, 2.0 * np.pi, count)
        r = radius + noise_sd * rng.standard_normal(count)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    pos = ring(n_pos, inner_radius)
    neg = ring(n_neg, outer_radius)
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)])
    return Dataset(np.vstack([pos, neg]), labels, domain, k=2)


def shift(data: Dataset, dx: float, keep_labels: bool = False, domain: str | None = None) -> Dataset:
    """Translate column 0 by ``dx``.  Labels are dropped unless ``keep_labels``."""
    if data.d < 1:
        raise DataError("shift needs at least one feature column")
    feats = data.features.copy()
    feats[:, 0] += dx
    return Dataset(
        feats,
        data.labels if keep_labels else None,
        data.domain if domain is None else domain,
        data.k,
    )


def split(data: Dataset, train_fraction: float, seed: int | np.random.Generator = 0) -> tuple[Dataset, Dataset]:
    """Disjoint random split; stratified per class when labels are present."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    if data.labels is None:
        groups = [np.arange(data.n)]
    else:
        groups = []
        for c in np.unique(data.labels):
            members = np.flatnonzero(data.labels == c)
            if len(members) < 2:
                raise DataError(f"class {c} has {len(members)} example(s); stratified split needs >= 2")
            groups.append(members)
    train_idx, test_idx = [], []
    for members in groups:
        perm = rng.permutation(members)
        n_train = int(round(train_fraction * len(perm)))
        n_train = min(max(n_train, 1), len(perm) - 1) if len(perm) >= 2 else n_train
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return data.subset(train), data.subset(test)


# --------------------------------------------------------------------------
# CSV


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def to_csv_text(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(data.d)] + ["label", "domain"])
    domains = data.domains()
    for i in range(data.n):
        label = "" if data.labels is None else str(int(data.labels[i]))
        writer.writerow([_fmt(v) for v in data.features[i]] + [label, domains[i]])
    return buf.getvalue()


def save_csv(data: Dataset, path: str | Path) -> None:
    Path(path).write_bytes(to_csv_text(data).encode("utf-8"))


def load_csv(path: str | Path, k: int | None = None) -> Dataset:
    """Read a dataset written by :func:`save_csv`.

    A missing ``label`` column, or a column with every cell empty, yields an
    unlabeled dataset.  ``k`` defaults to ``max(label) + 1`` (at least 2).
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    feat_cols = [j for j, name in enumerate(header) if name.startswith("x") and name[1:].isdigit()]
    if not feat_cols:
        raise DataError(f"{path}: header has no x0.. feature columns")
    label_col = header.index("label") if "label" in header else None
    domain_col = header.index("domain") if "domain" in header else None

    feats, labels, domains = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            feats.append([float(row[j]) for j in feat_cols])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric feature ({exc})") from None
        if label_col is not None:
            cell = row[label_col].strip()
            if cell:
                try:
                    labels.append(int(cell))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad label {cell!r}") from None
            else:
                labels.append(None)
        domains.append(row[domain_col] if domain_col is not None else "unknown")

    present = [lab for lab in labels if lab is not None]
    if present and len(present) != len(labels):
        raise DataError(f"{path}: label column is only partially filled")
    label_arr = np.asarray(present, dtype=np.int64) if present else None
    if k is None:
        k = max(2, int(label_arr.max()) + 1) if label_arr is not None and len(label_arr) else 2
    feat_arr = np.asarray(feats, dtype=np.float64).reshape(len(feats), len(feat_cols))
    uniq = set(domains)
    domain: str | np.ndarray = domains[0] if len(uniq) == 1 else np.asarray(domains, dtype=object)
    if not domains:
        domain = "unknown"
    try:
        return Dataset(feat_arr, label_arr, domain, k)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
