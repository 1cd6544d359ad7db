"""Unconditional adversarial training driven by minibatch K-Means labels
computed on discriminator features."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
