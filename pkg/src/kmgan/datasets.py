"""Datasets: the four-Gaussian synthetic set with its fixed nonlinear lift
into 100 dimensions, an IDX-format image loader, and a 28x28 digit-image
surrogate built from the scikit-learn digits set.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import Activation, Dense, MlpSpec

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _rotated_cov(var1: float, var2: float, angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    r = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return r @ np.diag([var1, var2]) @ r.T


def default_components():
    """Four separated 2-D Gaussians at the (+-3, +-3) corners with rotated
    covariances."""
    angles = [0.0, 30.0, 60.0, 90.0]
    means = [(3.0, 3.0), (-3.0, 3.0), (-3.0, -3.0), (3.0, -3.0)]
    return tuple(
        (np.array(m), _rotated_cov(0.5, 0.5, a)) for m, a in zip(means, angles)
    )


def default_lift_spec() -> MlpSpec:
    return nn.mlp(
        Dense(2, 10), Activation("sigmoid"), Dense(10, 100), Activation("sigmoid")
    )


@dataclass
class SyntheticSpec:
    components: tuple = field(default_factory=default_components)
    samples_per_component: int = 2500
    lift: MlpSpec = field(default_factory=default_lift_spec)
    lift_seed: int = 7

    def __post_init__(self):
        for mean, cov in self.components:
            cov = np.asarray(cov)
            if not np.allclose(cov, cov.T):
                raise ValueError("covariance not symmetric")
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise ValueError("covariance not positive definite")
        if self.lift.in_dim != 2 or self.lift.out_dim != 100:
            raise ValueError("lift must map R^2 -> R^100")


@dataclass
class LabeledDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray | None = None  # (n,) int
    latents: np.ndarray | None = None  # (n, 2), synthetic only

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


def gen_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> LabeledDataset:
    """Sample the mixture, remember the 2-D latents, and push them through the
    frozen lift network."""
    latents, labels = [], []
    for cls, (mean, cov) in enumerate(spec.components):
        pts = rng.multivariate_normal(mean, cov, size=spec.samples_per_component)
        latents.append(pts)
        labels.append(np.full(spec.samples_per_component, cls, dtype=np.int64))
    latents = np.concatenate(latents)
    labels = np.concatenate(labels)
    # lift weights come from their own seed so the mapping is one fixed function
    lift_rng = np.random.default_rng(spec.lift_seed)
    lift_params = nn.ParamSet()
    for i, layer in enumerate(spec.lift.layers):
        if isinstance(layer, Dense):
            w = lift_rng.normal(0.0, 1.0, size=(layer.in_dim, layer.out_dim))
            b = lift_rng.normal(0.0, 1.0, size=(1, layer.out_dim))
            lift_params.tensors[f"{i}.W"] = nn.Tensor(w)
            lift_params.tensors[f"{i}.b"] = nn.Tensor(b)
    feats = nn.forward(spec.lift, lift_params, latents, mode="eval").data
    return LabeledDataset(feats, labels, latents)


def load_idx(images_path, labels_path=None) -> LabeledDataset:
    """Read big-endian IDX images (and optional labels), scale pixels to [0,1],
    flatten row-major."""
    with open(images_path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ValueError("truncated IDX image file")
    magic, n, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"bad IDX image magic 0x{magic:08x}")
    expected = 16 + n * rows * cols
    if len(blob) != expected:
        raise ValueError(f"IDX payload is {len(blob)} bytes, expected {expected}")
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=16)
    features = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0

    labels = None
    if labels_path is not None:
        with open(labels_path, "rb") as fh:
            lblob = fh.read()
        if len(lblob) < 8:
            raise ValueError("truncated IDX label file")
        lmagic, ln = struct.unpack(">II", lblob[:8])
        if lmagic != IDX_LABELS_MAGIC:
            raise ValueError(f"bad IDX label magic 0x{lmagic:08x}")
        if ln != n:
            raise ValueError(f"{ln} labels for {n} images")
        if len(lblob) != 8 + ln:
            raise ValueError("IDX label payload size mismatch")
        labels = np.frombuffer(lblob, dtype=np.uint8, offset=8).astype(np.int64)
    return LabeledDataset(features, labels)


def write_idx(images_path, images: np.ndarray, labels_path=None, labels=None) -> None:
    """Inverse of load_idx; images are (n, rows, cols) uint8."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must be (n, rows, cols)")
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    if labels_path is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        if labels.shape != (n,):
            raise ValueError("labels must be one byte per image")
        with open(labels_path, "wb") as fh:
            fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
            fh.write(labels.tobytes())


def surrogate_digits(n: int = 10_000, seed: int = 0) -> LabeledDataset:
    """Labeled 28x28 digit images built by upscaling the 8x8 scikit-learn
    digits (each pixel replicated 3x3, centered with 2-pixel zero padding)
    and resampling with replacement to n images. Pixels land in [0, 1].

    Requires scikit-learn, which the package treats as optional.
    """
    from sklearn.datasets import load_digits

    base = load_digits()
    small = base.images  # (1797, 8, 8) with values in [0, 16]
    big = np.repeat(np.repeat(small, 3, axis=1), 3, axis=2)
    images = np.zeros((big.shape[0], 28, 28))
    images[:, 2:26, 2:26] = big / 16.0
    idx = np.random.default_rng(seed).integers(0, images.shape[0], size=n)
    feats = images[idx].reshape(n, 784).clip(0.0, 1.0)
    return LabeledDataset(feats, base.target[idx].astype(np.int64))


def export_synthetic_csv(dataset: LabeledDataset, path) -> None:
    d = dataset.dim
    header = "latent0,latent1,label," + ",".join(f"f{i}" for i in range(d))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(dataset.n):
            lat = dataset.latents[i] if dataset.latents is not None else (0.0, 0.0)
            lbl = int(dataset.labels[i]) if dataset.labels is not None else -1
            feats = ",".join(repr(float(v)) for v in dataset.features[i])
            fh.write(f"{float(lat[0])!r},{float(lat[1])!r},{lbl},{feats}\n")


def import_synthetic_csv(path) -> LabeledDataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:3] != ["latent0", "latent1", "label"]:
            raise ValueError("not a synthetic dataset CSV")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    latents = rows[:, :2]
    labels = rows[:, 2].astype(np.int64)
    features = rows[:, 3:]
    return LabeledDataset(features, labels, latents)
