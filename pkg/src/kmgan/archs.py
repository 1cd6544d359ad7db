"""Named generator/discriminator architectures for the desk-scale runs."""

from __future__ import annotations

from . import nn
from .nn import Activation, BatchNorm, Dense, MlpSpec


def _block(in_dim, out_dim, act="relu"):
    return (Dense(in_dim, out_dim), BatchNorm(out_dim), Activation(act))


def synthetic_discriminator() -> MlpSpec:
    return nn.mlp(
        *_block(100, 100),
        *_block(100, 50),
        *_block(50, 10),
        Dense(10, 2),
        Activation("sigmoid"),
    )


def synthetic_generator(noise_dim: int = 100) -> MlpSpec:
    return nn.mlp(
        *_block(noise_dim, 10),
        *_block(10, 50),
        *_block(50, 100),
    )


def image_discriminator(in_dim: int = 784, feat_dim: int = 16) -> MlpSpec:
    return nn.mlp(
        *_block(in_dim, 256),
        *_block(256, 64),
        Dense(64, feat_dim),
        Activation("sigmoid"),
    )


def image_generator(noise_dim: int = 100, out_dim: int = 784) -> MlpSpec:
    return nn.mlp(
        *_block(noise_dim, 256),
        *_block(256, 512),
        Dense(512, out_dim),
        Activation("sigmoid"),
    )


def prob_head(feat_dim: int) -> MlpSpec:
    """Scalar probability head stacked on the feature trunk for the vanilla
    baseline."""
    return nn.mlp(Dense(feat_dim, 1), Activation("sigmoid"))


ARCHS = {
    "synthetic": lambda noise_dim, data_dim: (
        synthetic_discriminator(),
        synthetic_generator(noise_dim),
    ),
    "image_dense": lambda noise_dim, data_dim: (
        image_discriminator(data_dim),
        image_generator(noise_dim, data_dim),
    ),
}


def build(name: str, noise_dim: int, data_dim: int):
    if name not in ARCHS:
        raise ValueError(f"unknown architecture {name!r}; have {sorted(ARCHS)}")
    return ARCHS[name](noise_dim, data_dim)
