"""MLP layer vocabulary: dense, batch-norm, and pointwise activations.

A spec is declarative (layer descriptors only); the trainable state lives in
a ParamSet so the same spec can be instantiated many times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = ("relu", "sigmoid", "tanh")


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class BatchNorm:
    dim: int
    epsilon: float = 1e-5
    momentum: float = 0.9


@dataclass(frozen=True)
class Activation:
    kind: str

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.kind!r}")


@dataclass(frozen=True)
class MlpSpec:
    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise ValueError("spec needs at least one layer")
        width = None
        for layer in self.layers:
            if isinstance(layer, Dense):
                if width is not None and layer.in_dim != width:
                    raise ValueError(
                        f"dense in_dim {layer.in_dim} does not chain with previous width {width}"
                    )
                width = layer.out_dim
            elif isinstance(layer, BatchNorm):
                if width is not None and layer.dim != width:
                    raise ValueError(f"batch-norm dim {layer.dim} != width {width}")
                width = layer.dim
            elif not isinstance(layer, Activation):
                raise TypeError(f"unknown layer {layer!r}")

    @property
    def in_dim(self):
        for layer in self.layers:
            if isinstance(layer, Dense):
                return layer.in_dim
            if isinstance(layer, BatchNorm):
                return layer.dim
        raise ValueError("spec has no dimensioned layer")

    @property
    def out_dim(self):
        for layer in reversed(self.layers):
            if isinstance(layer, Dense):
                return layer.out_dim
            if isinstance(layer, BatchNorm):
                return layer.dim
        raise ValueError("spec has no dimensioned layer")

    def has_batch_norm(self):
        return any(isinstance(l, BatchNorm) for l in self.layers)


def mlp(*layers) -> MlpSpec:
    return MlpSpec(tuple(layers))


def spec_to_list(spec: MlpSpec) -> list:
    """JSON-friendly layer list for checkpoints."""
    out = []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            out.append(["dense", layer.in_dim, layer.out_dim])
        elif isinstance(layer, BatchNorm):
            out.append(["bn", layer.dim, layer.epsilon, layer.momentum])
        else:
            out.append(["act", layer.kind])
    return out


def spec_from_list(items: list) -> MlpSpec:
    layers = []
    for item in items:
        kind = item[0]
        if kind == "dense":
            layers.append(Dense(int(item[1]), int(item[2])))
        elif kind == "bn":
            layers.append(BatchNorm(int(item[1]), float(item[2]), float(item[3])))
        elif kind == "act":
            layers.append(Activation(item[1]))
        else:
            raise ValueError(f"unknown serialized layer {item!r}")
    return MlpSpec(tuple(layers))


@dataclass
class ParamSet:
    """Named trainable tensors plus non-trainable running statistics."""

    tensors: dict = field(default_factory=dict)
    running: dict = field(default_factory=dict)
    step: int = 0

    def names(self):
        return list(self.tensors)

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def grad_map(self):
        """Gradients keyed like tensors; parameters the loss never reached get zeros."""
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.tensors.items()
        }

    def clone(self) -> "ParamSet":
        out = ParamSet(step=self.step)
        for name, t in self.tensors.items():
            out.tensors[name] = Tensor(t.data.copy(), requires_grad=t.requires_grad)
        out.running = {name: arr.copy() for name, arr in self.running.items()}
        return out


def init_params(spec: MlpSpec, rng: np.random.Generator, weight_std: float = 0.02) -> ParamSet:
    """Dense weights ~ N(0, weight_std^2), biases 0, BN scale 1 / shift 0."""
    params = ParamSet()
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            w = rng.normal(0.0, weight_std, size=(layer.in_dim, layer.out_dim))
            params.tensors[f"{i}.W"] = Tensor(w, requires_grad=True)
            params.tensors[f"{i}.b"] = Tensor(np.zeros((1, layer.out_dim)), requires_grad=True)
        elif isinstance(layer, BatchNorm):
            params.tensors[f"{i}.gamma"] = Tensor(np.ones((1, layer.dim)), requires_grad=True)
            params.tensors[f"{i}.beta"] = Tensor(np.zeros((1, layer.dim)), requires_grad=True)
            params.running[f"{i}.mean"] = np.zeros(layer.dim)
            params.running[f"{i}.var"] = np.ones(layer.dim)
    return params


def forward(spec: MlpSpec, params: ParamSet, x, mode: str = "train") -> Tensor:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.data.shape[1] != spec.in_dim:
        raise ValueError(f"input has {t.data.shape[1]} features, spec expects {spec.in_dim}")
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            t = T.add(T.matmul(t, params[f"{i}.W"]), params[f"{i}.b"])
        elif isinstance(layer, BatchNorm):
            gamma, beta = params[f"{i}.gamma"], params[f"{i}.beta"]
            if mode == "train":
                t, mu, var = T.batch_norm_train(t, gamma, beta, layer.epsilon)
                m = layer.momentum
                params.running[f"{i}.mean"] = m * params.running[f"{i}.mean"] + (1 - m) * mu
                params.running[f"{i}.var"] = m * params.running[f"{i}.var"] + (1 - m) * var
            else:
                t = T.batch_norm_eval(
                    t, gamma, beta,
                    params.running[f"{i}.mean"], params.running[f"{i}.var"],
                    layer.epsilon,
                )
        else:
            t = {"relu": T.relu, "sigmoid": T.sigmoid, "tanh": T.tanh}[layer.kind](t)
    return t
