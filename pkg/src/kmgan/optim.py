"""Bias-corrected Adam and discriminator weight clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ParamSet


@dataclass
class AdamState:
    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamSet, grads: dict, state: AdamState) -> None:
    """One in-place Adam update. grads must be keyed exactly like params."""
    missing = set(params.tensors) - set(grads)
    if missing:
        raise KeyError(f"missing gradients for {sorted(missing)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, tns in params.tensors.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(tns.data)
            state.v[name] = np.zeros_like(tns.data)
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        update = state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
        if not np.isfinite(update).all():
            raise FloatingPointError(f"non-finite Adam update for {name}")
        tns.data -= update
    params.step += 1


def clip_weights(params: ParamSet, bound: float) -> ParamSet:
    """Clamp every trainable value into [-bound, bound]; running stats untouched."""
    if bound <= 0:
        raise ValueError(f"clip bound must be positive, got {bound}")
    for tns in params.tensors.values():
        np.clip(tns.data, -bound, bound, out=tns.data)
    return params
