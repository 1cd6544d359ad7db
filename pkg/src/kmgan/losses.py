"""Loss functions: center loss bridging the adversarial and clustering
updates, distance-based discriminator/generator objectives, the pairwise
L1 regularizers with their balance weight, and the vanilla GAN baseline.

Feature arguments are graph tensors; center targets are plain arrays
(centers are constants within an iteration, gradients flow only through
features, except the center loss, which differentiates the smoothed
center expressions themselves).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .clustering import Assignment, Centroids
from .tensor import Tensor

PROB_EPS = 1e-7


@dataclass
class LossReport:
    l_d: float = 0.0
    l_g: float = 0.0
    l_center: float = 0.0
    l_intra: float = 0.0
    l_inter: float = 0.0
    applied_center_step: bool = False

    CSV_HEADER = "iter,l_d,l_g,l_center,l_intra,l_inter,applied_center_step"

    def csv_row(self, iteration: int) -> str:
        return (
            f"{iteration},{self.l_d!r},{self.l_g!r},{self.l_center!r},"
            f"{self.l_intra!r},{self.l_inter!r},{int(self.applied_center_step)}"
        )


def build_center_targets(assignment: Assignment, real_centroids: Centroids) -> np.ndarray:
    """Row i is the real center of the class sample i was assigned to."""
    labels = assignment.labels
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= real_centroids.k:
        raise ValueError("label out of range for the given centers")
    return real_centroids.centers[labels].copy()


def _reduce(t: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return T.mean_all(t)
    if reduction == "sum":
        return T.sum_all(t)
    raise ValueError(f"reduction must be mean or sum, got {reduction!r}")


def _smoothed_center_sum(cents: Centroids, feats: Tensor, assignment: Assignment) -> Tensor:
    """Sum over centers of (c_m + sum of assigned features) / (1 + count_m),
    differentiable w.r.t. the features. Empty classes contribute c_m / 1."""
    j = assignment.per_center_counts.astype(np.float64)
    const = (cents.centers / (1.0 + j)[:, None]).sum(axis=0, keepdims=True)
    weights = 1.0 / (1.0 + j[assignment.labels])
    weighted = T.mul(feats, Tensor(weights[:, None]))
    return T.add(T.sum_rows(weighted), Tensor(const))


def center_loss(
    real_cents: Centroids,
    fake_cents: Centroids,
    real_feats: Tensor,
    fake_feats: Tensor,
    real_assign: Assignment,
    fake_assign: Assignment,
) -> Tensor:
    """L1 distance between the summed smoothed-updated real and fake centers."""
    if real_cents.k != fake_cents.k:
        raise ValueError(f"center count mismatch: {real_cents.k} vs {fake_cents.k}")
    s_real = _smoothed_center_sum(real_cents, real_feats, real_assign)
    s_fake = _smoothed_center_sum(fake_cents, fake_feats, fake_assign)
    return T.l1_norm(T.sub(s_real, s_fake))


def distance_to_targets(feats: Tensor, targets: np.ndarray, reduction: str = "mean") -> Tensor:
    """Batch reduction of per-sample Euclidean distance to the target rows."""
    targets = np.asarray(targets, dtype=np.float64)
    if feats.data.shape != targets.shape:
        raise ValueError(f"shape mismatch {feats.data.shape} vs {targets.shape}")
    return _reduce(T.row_norms_l2(T.sub(feats, Tensor(targets))), reduction)


def intra_loss(real_feats: Tensor, fake_feats: Tensor, normalize: bool = True) -> Tensor:
    """Pairwise L1 spread within the real batch plus within the fake batch."""
    nd, ng = real_feats.data.shape[0], fake_feats.data.shape[0]
    if nd < 1 or ng < 1:
        raise ValueError("empty batch")
    total = T.add(T.pairwise_intra(real_feats), T.pairwise_intra(fake_feats))
    if normalize:
        pairs = nd * (nd - 1) // 2 + ng * (ng - 1) // 2
        total = T.mul(total, Tensor(1.0 / max(pairs, 1)))
    return total


def inter_loss(real_feats: Tensor, fake_feats: Tensor, normalize: bool = True) -> Tensor:
    """Pairwise L1 distance over all real/fake cross pairs."""
    nd, ng = real_feats.data.shape[0], fake_feats.data.shape[0]
    if nd < 1 or ng < 1:
        raise ValueError("empty batch")
    total = T.pairwise_inter(real_feats, fake_feats)
    if normalize:
        total = T.mul(total, Tensor(1.0 / (nd * ng)))
    return total


def d_loss(
    real_feats: Tensor,
    c_real: np.ndarray,
    fake_feats: Tensor,
    c_gen: np.ndarray,
    lam: float = 0.0,
    l_intra: Tensor | None = None,
    l_inter: Tensor | None = None,
    reduction: str = "mean",
) -> Tensor:
    """Pull real features to their centers, push fakes from theirs; optionally
    add the balance-weighted (intra - inter) regularizer."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    loss = T.sub(
        distance_to_targets(real_feats, c_real, reduction),
        distance_to_targets(fake_feats, c_gen, reduction),
    )
    if l_intra is not None or l_inter is not None:
        if l_intra is None or l_inter is None:
            raise ValueError("intra and inter terms must be given together")
        loss = T.add(loss, T.mul(Tensor(lam), T.sub(l_intra, l_inter)))
    return loss


def g_loss(
    fake_feats: Tensor,
    c_gen: np.ndarray,
    lam: float = 0.0,
    l_inter: Tensor | None = None,
    reduction: str = "mean",
) -> Tensor:
    """Pull generated features toward the real centers they were matched to."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    loss = distance_to_targets(fake_feats, c_gen, reduction)
    if l_inter is not None:
        loss = T.add(loss, T.mul(Tensor(lam), l_inter))
    return loss


def vanilla_gan_losses(
    d_prob_real: Tensor, d_prob_fake: Tensor, saturating: bool = False
) -> tuple[Tensor, Tensor]:
    """Binary cross-entropy baseline under the min convention. The generator
    loss defaults to the non-saturating form."""
    for p in (d_prob_real, d_prob_fake):
        if np.any(p.data < 0) or np.any(p.data > 1):
            raise ValueError("probability outside [0, 1]")
    pr = T.clamp(d_prob_real, PROB_EPS, 1.0 - PROB_EPS)
    pf = T.clamp(d_prob_fake, PROB_EPS, 1.0 - PROB_EPS)
    one = Tensor(1.0)
    loss_d = T.sub(
        T.mul(T.mean_all(T.log(pr)), Tensor(-1.0)),
        T.mean_all(T.log(T.sub(one, pf))),
    )
    if saturating:
        loss_g = T.mean_all(T.log(T.sub(one, pf)))
    else:
        loss_g = T.mul(T.mean_all(T.log(pf)), Tensor(-1.0))
    return loss_d, loss_g
