"""Evaluation: accuracy, expanded-domain averaging, F1, AUC, retrieval, exports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .datagen import Dataset
from .models import Network


@dataclass
class EvalReport:
    per_domain_accuracy: dict[str, float]
    expanded_accuracy: float
    per_class_f1: list[float]
    confusion: list[list[int]]
    auc: float | None = None
    model: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def predict_probs(net: Network, x) -> np.ndarray:
    x = x.features if isinstance(x, Dataset) else x
    return net(np.asarray(x, dtype=np.float64), train=False).probs.data


def argmax_lowest(probs: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximal index
    return np.argmax(np.asarray(probs), axis=1)


def confusion_matrix(labels, preds, k: int) -> np.ndarray:
    """Counts with rows indexed by true class and columns by predicted class."""
    out = np.zeros((k, k), dtype=np.int64)
    np.add.at(out, (np.asarray(labels, dtype=np.int64), np.asarray(preds, dtype=np.int64)), 1)
    return out


def accuracy_from_confusion(confusion) -> float:
    c = np.asarray(confusion)
    total = c.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(c) / total)


def accuracy_from_probs(probs, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("accuracy of an empty test set is undefined")
    return float(np.mean(argmax_lowest(probs) == labels))


def accuracy(net: Network, testset: Dataset) -> float:
    """Fraction of rows whose argmax prediction (eval mode) equals the label."""
    if not testset.labeled:
        raise ValueError("accuracy needs a labeled test set")
    return accuracy_from_probs(predict_probs(net, testset), testset.labels)


def expanded_accuracy(acc_by_domain) -> float:
    """Unweighted mean over domains, so every domain counts equally whatever its size."""
    values = list(acc_by_domain.values()) if isinstance(acc_by_domain, dict) else list(acc_by_domain)
    if not values:
        raise ValueError("expanded_accuracy needs at least one domain")
    return float(sum(values) / len(values))


def f1_per_class(confusion) -> list[float]:
    c = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(c)
    predicted = c.sum(axis=0)
    actual = c.sum(axis=1)
    scores = []
    for i in range(len(c)):
        if predicted[i] == 0 or actual[i] == 0 or tp[i] == 0:
            scores.append(0.0)
            continue
        p, r = tp[i] / predicted[i], tp[i] / actual[i]
        scores.append(float(2 * p * r / (p + r)))
    return scores


def auc(scores, binary_labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(binary_labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both positive and negative examples")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average rank of the tie block
        i = j + 1
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, binary_labels) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) sweeping the threshold down through each distinct score."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(binary_labels).astype(bool)
    thresholds = np.unique(scores)[::-1]
    tpr = [0.0] + [float(np.mean(scores[y] >= t)) for t in thresholds]
    fpr = [0.0] + [float(np.mean(scores[~y] >= t)) for t in thresholds]
    return np.asarray(fpr), np.asarray(tpr)


def trapezoid_auc(scores, binary_labels) -> float:
    fpr, tpr = roc_curve(scores, binary_labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def retrieval_precision(query_feats, query_labels, corpus_feats, corpus_labels, n: int) -> float:
    """Mean P@N: share of each query's N nearest corpus rows (Euclidean) with its class."""
    if n <= 0:
        raise ValueError(f"N must be positive, got {n}")
    q = np.asarray(query_feats, dtype=np.float64)
    c = np.asarray(corpus_feats, dtype=np.float64)
    ql, cl = np.asarray(query_labels), np.asarray(corpus_labels)
    if n > len(c):
        raise ValueError(f"N={n} exceeds corpus size {len(c)}")
    d2 = ((q[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
    # stable sort keeps corpus order among equal distances
    top = np.argsort(d2, axis=1, kind="stable")[:, :n]
    return float(np.mean(cl[top] == ql[:, None]))


def boundary_grid(net: Network, x_range, y_range, resolution: int) -> np.ndarray:
    """Rows of (x, y, predicted class, prob) over a resolution x resolution lattice.

    ``prob`` is the class-1 probability for binary models (contour it at 0.5)
    and the winning-class probability otherwise.
    """
    if net.input_dim != 2:
        raise ValueError(f"boundary grid needs a 2-D input model, got input width {net.input_dim}")
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    xs = np.linspace(x_range[0], x_range[1], resolution)
    ys = np.linspace(y_range[0], y_range[1], resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    probs = predict_probs(net, pts)
    cls = argmax_lowest(probs)
    prob = probs[:, 1] if probs.shape[1] == 2 else probs[np.arange(len(probs)), cls]
    return np.column_stack([pts, cls, prob])


def boundary_csv(grid: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "class", "prob"])
    for x, y, c, p in grid:
        w.writerow([format(x, ".17g"), format(y, ".17g"), int(c), format(p, ".17g")])
    return buf.getvalue()


def export_features(net: Network, dataset: Dataset) -> tuple[np.ndarray, np.ndarray | None]:
    """Eval-mode extractor output z = F(x) for each row, plus the labels if any."""
    z = net.extractor(Tensor(dataset.features), train=False).data
    return z, dataset.labels


def features_csv(z: np.ndarray, labels, domains) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"z{j}" for j in range(z.shape[1])] + ["label", "domain"])
    for i, row in enumerate(z):
        label = "" if labels is None else str(int(labels[i]))
        w.writerow([format(v, ".17g") for v in row] + [label, domains[i]])
    return buf.getvalue()


def evaluate_probs(probs_by_domain: dict[str, np.ndarray], testsets: dict[str, Dataset], model: str = "") -> EvalReport:
    """Build a report from precomputed probabilities (used for routed baselines too)."""
    per_domain = {}
    all_probs, all_labels = [], []
    for name, ds in testsets.items():
        if not ds.labeled:
            raise ValueError(f"test set {name!r} has no labels")
        per_domain[name] = accuracy_from_probs(probs_by_domain[name], ds.labels)
        all_probs.append(probs_by_domain[name])
        all_labels.append(ds.labels)
    probs = np.vstack(all_probs)
    labels = np.concatenate(all_labels)
    k = probs.shape[1]
    conf = confusion_matrix(labels, argmax_lowest(probs), k)
    auc_value = None
    if k == 2 and 0 < labels.sum() < len(labels):
        auc_value = auc(probs[:, 1], labels)
    return EvalReport(
        per_domain_accuracy=per_domain,
        expanded_accuracy=expanded_accuracy(per_domain),
        per_class_f1=f1_per_class(conf),
        confusion=conf.tolist(),
        auc=auc_value,
        model=model,
    )


def evaluate(net: Network, testsets: dict[str, Dataset], model: str = "") -> EvalReport:
    return evaluate_probs({name: predict_probs(net, ds) for name, ds in testsets.items()}, testsets, model)
