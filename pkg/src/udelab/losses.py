"""Objective terms: classification, DDC, adversarial domain losses, distillation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

EPS = 1e-7
KD_VARIANTS = ("kl", "ce", "l2")


@dataclass
class LossValue:
    scalar: Tensor
    name: str

    @property
    def value(self) -> float:
        return self.scalar.item()

    def __float__(self) -> float:
        return self.value


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    if len(labels) and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k}): {labels.min()}..{labels.max()}")
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def classification_loss(logits, labels, from_probs: bool = False) -> LossValue:
    """Mean negative log-likelihood of the true class.

    Pass logits (the default) for a log-softmax evaluation.  With
    ``from_probs=True`` the input is taken as row-stochastic probabilities and
    clamped at ``EPS`` before the log.
    """
    x = ad.as_tensor(logits)
    if x.ndim != 2:
        raise ShapeError(f"classification_loss: expected n x k input, got {x.shape}")
    if x.shape[0] == 0:
        raise ShapeError("classification_loss: empty batch")
    onehot = _one_hot(labels, x.shape[1])
    if len(onehot) != x.shape[0]:
        raise ShapeError(f"classification_loss: {x.shape[0]} rows but {len(onehot)} labels")
    logp = ad.log(ad.clip(x, EPS, 1.0)) if from_probs else ad.log_softmax(x, axis=1)
    nll = ad.neg(ad.mean(ad.sum(ad.mul(logp, onehot), axis=1)))
    return LossValue(nll, "clf")


def ddc_loss(z_s, z_t) -> LossValue:
    """Squared Euclidean distance between the two batches' mean features."""
    z_s, z_t = ad.as_tensor(z_s), ad.as_tensor(z_t)
    if z_s.ndim != 2 or z_t.ndim != 2 or z_s.shape[1] != z_t.shape[1]:
        raise ShapeError(f"ddc_loss: feature shapes {z_s.shape} and {z_t.shape} do not conform")
    if z_s.shape[0] == 0 or z_t.shape[0] == 0:
        raise ShapeError("ddc_loss: empty batch")
    diff = ad.sub(ad.mean(z_s, axis=0), ad.mean(z_t, axis=0))
    return LossValue(ad.sum(ad.square(diff)), "ddc")


def cdan_condition(z, probs) -> Tensor:
    """Flattened per-row outer product z (x) p, feature index major."""
    return ad.outer_rows(z, probs)


def _check_unit_interval(t: Tensor, what: str) -> None:
    if np.any(~np.isfinite(t.data)) or np.any(t.data < 0.0) or np.any(t.data > 1.0):
        raise ValueError(f"{what}: discriminator outputs must lie in [0, 1]")


def domain_adversarial_loss(d_out_s, d_out_t) -> LossValue:
    """Binary cross-entropy with source labelled 1, target labelled 0.

    Equals the negated discriminator reward averaged per domain.
    """
    d_s, d_t = ad.as_tensor(d_out_s), ad.as_tensor(d_out_t)
    _check_unit_interval(d_s, "domain_adversarial_loss")
    _check_unit_interval(d_t, "domain_adversarial_loss")
    if d_s.data.size == 0 or d_t.data.size == 0:
        raise ShapeError("domain_adversarial_loss: empty batch")
    log_src = ad.mean(ad.log(ad.clip(d_s, EPS, 1.0 - EPS)))
    log_tgt = ad.mean(ad.log(ad.clip(ad.sub(1.0, d_t), EPS, 1.0 - EPS)))
    return LossValue(ad.neg(ad.add(log_src, log_tgt)), "adv")


def multi_domain_adversarial_loss(d_probs, domain_index) -> LossValue:
    """Cross-entropy of an m-way domain discriminator against each row's domain index."""
    d = ad.as_tensor(d_probs)
    _check_unit_interval(d, "multi_domain_adversarial_loss")
    loss = classification_loss(d, domain_index, from_probs=True)
    return LossValue(loss.scalar, "adv_multi")


def kd_loss(teacher_probs, student_probs, variant: str = "kl") -> LossValue:
    """Distillation loss with the teacher as a constant target.

    kl: mean_i sum_c t log(t / s); ce: mean_i -sum_c t log s;
    l2: mean_i sum_c (t - s)^2.
    """
    if variant not in KD_VARIANTS:
        raise ValueError(f"unknown distillation variant {variant!r}; choose from {KD_VARIANTS}")
    t = np.asarray(teacher_probs.data if isinstance(teacher_probs, Tensor) else teacher_probs, dtype=np.float64)
    s = ad.as_tensor(student_probs)
    if t.shape != s.shape or s.ndim != 2:
        raise ShapeError(f"kd_loss: teacher {t.shape} and student {s.shape} do not conform")
    if variant == "l2":
        per_row = ad.sum(ad.square(ad.sub(s, t)), axis=1)
        return LossValue(ad.mean(per_row), "kd_l2")
    log_s = ad.log(ad.clip(s, EPS, 1.0))
    cross = ad.neg(ad.sum(ad.mul(log_s, t), axis=1))
    if variant == "ce":
        return LossValue(ad.mean(cross), "kd_ce")
    safe_t = np.clip(t, EPS, 1.0)
    entropy = -(t * np.log(safe_t)).sum(axis=1)
    return LossValue(ad.mean(ad.sub(cross, entropy)), "kd_kl")
