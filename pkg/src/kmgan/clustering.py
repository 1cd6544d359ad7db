"""K-Means subsystem: assignment, objective, K-Means++ seeding, minibatch
center updates, and a full-batch Lloyd solver used as a testing oracle.

Centers for a k-way clustering are stored row-per-center. Two independent
center sets (real-feature and generated-feature) are maintained by the
training loop; nothing in here aliases them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass
class Centroids:
    """k centers plus the lifetime number of samples absorbed per center."""

    centers: np.ndarray  # (k, d)
    counts: np.ndarray = None  # (k,) int64

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape[0] < 1:
            raise ValueError("centers must be a (k >= 1, d) matrix")
        if not np.isfinite(self.centers).all():
            raise ValueError("non-finite center")
        if self.counts is None:
            self.counts = np.zeros(self.centers.shape[0], dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (self.centers.shape[0],) or (self.counts < 0).any():
                raise ValueError("counts must be k non-negative integers")

    @property
    def k(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]

    def clone(self) -> "Centroids":
        return Centroids(self.centers.copy(), self.counts.copy())


@dataclass
class Assignment:
    """Per-sample center index plus per-center membership bookkeeping."""

    labels: np.ndarray  # (n,) int64
    per_center_positions: list = field(default_factory=list)  # k arrays of sample indices
    per_center_counts: np.ndarray = None  # (k,)

    @property
    def n(self):
        return self.labels.shape[0]


def assign_labels(features: np.ndarray, centroids: Centroids) -> Assignment:
    """Nearest-center assignment by Euclidean distance, ties to the smallest index."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be an (n, d) matrix")
    if features.shape[1] != centroids.dim:
        raise ValueError(
            f"feature dim {features.shape[1]} != center dim {centroids.dim}"
        )
    if not np.isfinite(features).all():
        raise ValueError("non-finite feature")
    labels = kernels.nearest_centers(
        np.ascontiguousarray(features), np.ascontiguousarray(centroids.centers)
    )
    positions = [np.flatnonzero(labels == m) for m in range(centroids.k)]
    counts = np.array([p.size for p in positions], dtype=np.int64)
    return Assignment(labels, positions, counts)


def kmeans_objective(features: np.ndarray, centroids: Centroids, assignment: Assignment) -> float:
    """Total squared Euclidean distance of each sample to its assigned center."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != assignment.n:
        raise ValueError("assignment size does not match features")
    if features.shape[1] != centroids.dim:
        raise ValueError("feature dim does not match centers")
    if assignment.labels.min(initial=0) < 0 or assignment.labels.max(initial=0) >= centroids.k:
        raise ValueError("label out of range")
    diff = features - centroids.centers[assignment.labels]
    return float(np.sum(diff * diff))


def kmeanspp_init(features: np.ndarray, k: int, rng: np.random.Generator) -> Centroids:
    """D^2-weighted seeding: first center uniform, each next proportional to the
    squared distance to the nearest already-chosen center."""
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds sample count {n}")
    first = int(rng.integers(n))
    centers = [features[first].copy()]
    d2 = np.sum((features - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            warnings.warn(
                "all points coincide with chosen centers; duplicating a point",
                RuntimeWarning,
            )
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(features[idx].copy())
        d2 = np.minimum(d2, np.sum((features - centers[-1]) ** 2, axis=1))
    return Centroids(np.stack(centers))


def update_centers_minibatch(
    centroids: Centroids, features: np.ndarray, assignment: Assignment
) -> Centroids:
    """Smoothed minibatch update: center_m <- (center_m + sum of assigned
    features) / (1 + count_m). Centers with an empty batch are unchanged."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != assignment.n:
        raise ValueError("assignment size does not match features")
    if features.shape[1] != centroids.dim:
        raise ValueError("feature dim does not match centers")
    new_centers = centroids.centers.copy()
    new_counts = centroids.counts.copy()
    for m in range(centroids.k):
        idx = assignment.per_center_positions[m]
        j = idx.size
        if j == 0:
            continue
        new_centers[m] = (centroids.centers[m] + features[idx].sum(axis=0)) / (1.0 + j)
        new_counts[m] += j
    return Centroids(new_centers, new_counts)


def update_centers_batch_mean(
    centroids: Centroids, features: np.ndarray, assignment: Assignment
) -> Centroids:
    """Plain batch-mean alternative to the smoothed rule (config switch)."""
    features = np.asarray(features, dtype=np.float64)
    new_centers = centroids.centers.copy()
    new_counts = centroids.counts.copy()
    for m in range(centroids.k):
        idx = assignment.per_center_positions[m]
        if idx.size == 0:
            continue
        new_centers[m] = features[idx].mean(axis=0)
        new_counts[m] += idx.size
    return Centroids(new_centers, new_counts)


def lloyd_full(
    features: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iters: int = 300,
    tol: float = 1e-9,
    history: list | None = None,
):
    """Full-batch Lloyd iteration from a K-Means++ seed.

    Empty clusters are re-seeded at the point farthest from its current
    center. When a list is passed as `history`, the objective value after
    every assignment step is appended to it. Returns (Centroids, Assignment)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < k:
        raise ValueError("fewer samples than clusters")
    cents = kmeanspp_init(features, k, rng)
    assignment = assign_labels(features, cents)
    if history is not None:
        history.append(kmeans_objective(features, cents, assignment))
    for _ in range(max_iters):
        new_centers = cents.centers.copy()
        for m in range(k):
            idx = assignment.per_center_positions[m]
            if idx.size > 0:
                new_centers[m] = features[idx].mean(axis=0)
            else:
                diff = features - cents.centers[assignment.labels]
                far = int(np.argmax(np.sum(diff * diff, axis=1)))
                new_centers[m] = features[far]
        movement = float(np.max(np.abs(new_centers - cents.centers)))
        cents = Centroids(new_centers, cents.counts)
        assignment = assign_labels(features, cents)
        if history is not None:
            history.append(kmeans_objective(features, cents, assignment))
        if movement < tol:
            break
    return cents, assignment


def export_centers_csv(centroids: Centroids, path) -> None:
    header = "center_id," + ",".join(f"f{i}" for i in range(centroids.dim))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for m in range(centroids.k):
            row = ",".join(repr(float(v)) for v in centroids.centers[m])
            fh.write(f"{m},{row}\n")
