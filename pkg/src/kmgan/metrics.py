"""Evaluation: clustering agreement (purity, NMI), the split-based
inception-style diversity score with a pluggable classifier, and the
class-frequency audit of generated samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, optim, tensor as T
from .nn import Activation, Dense, MlpSpec

KL_FLOOR = 1e-12


def _contingency(pred, true):
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("label vectors must be equal-length 1-D")
    if pred.size == 0:
        raise ValueError("empty label vectors")
    kp, kt = pred.max() + 1, true.max() + 1
    table = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(table, (pred, true), 1)
    return table


def purity(pred_labels, true_labels) -> float:
    """Fraction of samples covered by each cluster's majority true class."""
    table = _contingency(pred_labels, true_labels)
    return float(table.max(axis=1).sum() / table.sum())


def nmi(pred_labels, true_labels) -> float:
    """Mutual information normalized by the arithmetic mean of entropies."""
    table = _contingency(pred_labels, true_labels).astype(np.float64)
    n = table.sum()
    p_joint = table / n
    p_pred = p_joint.sum(axis=1)
    p_true = p_joint.sum(axis=0)
    nz = p_joint > 0
    mi = np.sum(p_joint[nz] * np.log(p_joint[nz] / np.outer(p_pred, p_true)[nz]))
    h_pred = -np.sum(p_pred[p_pred > 0] * np.log(p_pred[p_pred > 0]))
    h_true = -np.sum(p_true[p_true > 0] * np.log(p_true[p_true > 0]))
    denom = 0.5 * (h_pred + h_true)
    if denom == 0:
        # both partitions are single-cluster; identical by construction
        return 1.0
    return float(max(0.0, min(1.0, mi / denom)))


def validate_prob_table(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("probability table must be non-empty and 2-D")
    if (probs < 0).any():
        raise ValueError("negative probability")
    if np.abs(probs.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValueError("rows must sum to 1 within 1e-9")
    return probs


def inception_score(probs: np.ndarray, splits: int = 10) -> tuple[float, float]:
    """exp(mean KL(conditional || split marginal)) per split, reported as
    mean and standard deviation across splits."""
    probs = validate_prob_table(probs)
    n = probs.shape[0]
    if splits < 1 or n % splits != 0 or n // splits < 2:
        raise ValueError(f"{n} samples cannot form {splits} splits of >= 2")
    part = n // splits
    scores = []
    for s in range(splits):
        p_yx = probs[s * part : (s + 1) * part]
        p_y = p_yx.mean(axis=0)
        kl = np.sum(
            p_yx * (np.log(np.maximum(p_yx, KL_FLOOR)) - np.log(np.maximum(p_y, KL_FLOOR))),
            axis=1,
        )
        scores.append(np.exp(kl.mean()))
    return float(np.mean(scores)), float(np.std(scores))


@dataclass
class FrequencyReport:
    counts: np.ndarray  # (C,)
    fractions: np.ndarray  # (C,)

    @property
    def entropy(self) -> float:
        p = self.fractions[self.fractions > 0]
        return float(-np.sum(p * np.log(p)))

    def csv(self) -> str:
        lines = ["class,count,fraction"]
        for c, (cnt, frac) in enumerate(zip(self.counts, self.fractions)):
            lines.append(f"{c},{int(cnt)},{float(frac)!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        lines = [f"samples: {int(self.counts.sum())}"]
        for c, frac in enumerate(self.fractions):
            lines.append(f"  class {c}: {frac:7.2%}")
        lines.append(f"entropy: {self.entropy:.4f} (uniform: {np.log(len(self.counts)):.4f})")
        return "\n".join(lines) + "\n"


def class_frequencies(classifier_probs: np.ndarray) -> FrequencyReport:
    """Argmax class per row (ties to the smallest index), counted per class."""
    probs = validate_prob_table(classifier_probs)
    picks = np.argmax(probs, axis=1)
    counts = np.bincount(picks, minlength=probs.shape[1]).astype(np.int64)
    return FrequencyReport(counts, counts / counts.sum())


def classifier_spec(in_dim: int, n_classes: int, hidden: int = 128) -> MlpSpec:
    return nn.mlp(Dense(in_dim, hidden), Activation("relu"), Dense(hidden, n_classes))


def classify(spec: MlpSpec, params: nn.ParamSet, features: np.ndarray) -> np.ndarray:
    logits = nn.forward(spec, params, features, mode="eval").data
    return T.softmax(logits)


def accuracy(spec: MlpSpec, params: nn.ParamSet, features, labels) -> float:
    probs = classify(spec, params, features)
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def train_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    hidden: int = 128,
    epochs: int = 20,
    batch_size: int = 128,
    lr: float = 1e-3,
    seed: int = 0,
    holdout: float = 0.2,
):
    """Softmax cross-entropy training of a small dense classifier.

    Returns (spec, params, train_accuracy, test_accuracy)."""
    rng = np.random.default_rng(seed)
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    perm = rng.permutation(n)
    n_test = int(n * holdout)
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    spec = classifier_spec(features.shape[1], n_classes, hidden)
    params = nn.init_params(spec, rng, weight_std=0.05)
    state = optim.AdamState(alpha=lr, beta1=0.9, beta2=0.999)
    for _ in range(epochs):
        order = rng.permutation(train_idx)
        for start in range(0, order.size, batch_size):
            idx = order[start : start + batch_size]
            if idx.size < 2:
                continue
            params.zero_grad()
            logits = nn.forward(spec, params, features[idx], mode="train")
            loss = T.softmax_cross_entropy(logits, labels[idx])
            loss.backward()
            optim.adam_step(params, params.grad_map(), state)
    train_acc = accuracy(spec, params, features[train_idx], labels[train_idx])
    test_acc = accuracy(spec, params, features[test_idx], labels[test_idx]) if n_test else train_acc
    return spec, params, train_acc, test_acc
