"""Comparison systems: domain-classifier routing, oracle routing, late fusion."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datagen import Dataset, concat_datasets
from .metrics import predict_probs
from .models import Network
from .trainers import TrainConfig, train_source

SOURCE_TAG = "source"


def train_domain_classifier(x_s: Dataset, x_t: Dataset, config: TrainConfig) -> Network:
    """Toy backbone trained to tell source (class 0) from target (class 1)."""
    if x_s.n == 0 or x_t.n == 0:
        raise ValueError("both domains need at least one example")
    domain_labeled = concat_datasets(
        [
            Dataset(x_s.features, np.zeros(x_s.n, dtype=np.int64), "source", 2),
            Dataset(x_t.features, np.ones(x_t.n, dtype=np.int64), "target", 2),
        ]
    )
    return train_source(replace(config, method="source"), domain_labeled).network


class TagLookupClassifier:
    """Perfect domain classifier built from known rows: one-hot on the true domain.

    Rows are matched by exact feature bytes; only meant for oracle comparisons.
    """

    def __init__(self, datasets: list[Dataset]):
        self._table: dict[bytes, int] = {}
        for ds in datasets:
            for row, tag in zip(ds.features, ds.domains()):
                self._table[row.tobytes()] = 0 if tag == SOURCE_TAG else 1

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        idx = np.array([self._table[row.tobytes()] for row in x], dtype=np.int64)
        out = np.zeros((len(x), 2))
        out[np.arange(len(x)), idx] = 1.0
        return out


def _source_prob(domain_clf, x: np.ndarray) -> np.ndarray:
    probs = predict_probs(domain_clf, x) if isinstance(domain_clf, Network) else domain_clf(x)
    return np.asarray(probs)[:, 0]


@dataclass
class SelectorSystem:
    domain_clf: Network | TagLookupClassifier
    model_source: Network
    model_target: Network

    def __post_init__(self):
        widths = {self.model_source.input_dim, self.model_target.input_dim}
        if isinstance(self.domain_clf, Network):
            widths.add(self.domain_clf.input_dim)
        if len(widths) != 1:
            raise ValueError(f"selector members disagree on input width: {sorted(widths)}")
        if self.model_source.class_count != self.model_target.class_count:
            raise ValueError("selector members disagree on class count")


def select_predict(system: SelectorSystem, x) -> np.ndarray:
    """Route each row to the source model when P(source) >= 0.5, else to the adapted model."""
    x = np.asarray(x.features if isinstance(x, Dataset) else x, dtype=np.float64)
    to_source = _source_prob(system.domain_clf, x) >= 0.5
    return _route(to_source, system.model_source, system.model_target, x)


def _route(to_source: np.ndarray, g_s: Network, g_da: Network, x: np.ndarray) -> np.ndarray:
    # both members see the full batch so routed rows match standalone inference bit for bit
    return np.where(to_source[:, None], predict_probs(g_s, x), predict_probs(g_da, x))


def oracle_select_predict(domain_tag, g_s: Network, g_da: Network, x) -> np.ndarray:
    """Route by the ground-truth tag: 'source' rows to ``g_s``, all others to ``g_da``."""
    if isinstance(x, Dataset):
        if domain_tag is None:
            domain_tag = x.domains()
        x = x.features
    if domain_tag is None:
        raise ValueError("oracle routing needs a domain tag")
    x = np.asarray(x, dtype=np.float64)
    tags = np.full(len(x), domain_tag, dtype=object) if isinstance(domain_tag, str) else np.asarray(domain_tag, dtype=object)
    if len(tags) != len(x) or any(t is None or t == "" for t in tags):
        raise ValueError("every row needs a domain tag")
    return _route(tags == SOURCE_TAG, g_s, g_da, x)


def ensemble_predict(g_s: Network, g_da: Network, x) -> np.ndarray:
    """Late average fusion of the two members' probabilities."""
    if g_s.class_count != g_da.class_count:
        raise ValueError(f"class counts differ: {g_s.class_count} vs {g_da.class_count}")
    return 0.5 * (predict_probs(g_s, x) + predict_probs(g_da, x))
