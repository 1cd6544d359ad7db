"""Reverse-mode differentiation over dense 2-D float64 arrays.

Every value in the graph is a (rows, cols) matrix; scalars are (1, 1).
Operations record a backward closure; Tensor.backward() runs the topological
sweep. Non-finite values are rejected at construction, never propagated.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class NonFiniteError(ValueError):
    """A NaN or Inf showed up in a tensor value."""


class GraphError(RuntimeError):
    """Backward was requested on a tensor that does not support it."""


def _as_matrix(data):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"tensors are 2-D, got ndim={arr.ndim}")
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = _as_matrix(data)
        if not np.isfinite(arr).all():
            raise NonFiniteError("non-finite value in tensor")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on shape {self.data.shape}")
        return float(self.data[0, 0])

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.shape != (1, 1):
            raise GraphError(f"backward needs a (1,1) scalar, got {self.data.shape}")
        if self._backward is None and not self._parents and not self.requires_grad:
            raise GraphError("backward on a tensor outside any recorded graph")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones((1, 1))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar; the real work lives in the module functions
    def __add__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape):
    # reduce a gradient back to the broadcast operand's shape
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul {a.data.shape} x {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, 0.0)

    def backward(g):
        _accum(a, g * mask)

    return _node(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        _accum(a, g * data * (1.0 - data))

    return _node(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - data * data))

    return _node(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log of non-positive value")
    data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _node(data, (a,), backward)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    data = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def backward(g):
        _accum(a, g * inside)

    return _node(data, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    data = np.array([[a.data.sum()]])

    def backward(g):
        _accum(a, np.full(a.data.shape, g[0, 0]))

    return _node(data, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.array([[a.data.sum() / n]])

    def backward(g):
        _accum(a, np.full(a.data.shape, g[0, 0] / n))

    return _node(data, (a,), backward)


def sum_rows(a: Tensor) -> Tensor:
    """Column-wise sum: (n, d) -> (1, d)."""
    data = a.data.sum(axis=0, keepdims=True)

    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(data, (a,), backward)


def l1_norm(a: Tensor) -> Tensor:
    """Sum of absolute entries, subgradient 0 at exact zeros."""
    data = np.array([[np.abs(a.data).sum()]])
    sign = np.sign(a.data)

    def backward(g):
        _accum(a, g[0, 0] * sign)

    return _node(data, (a,), backward)


def row_norms_l2(a: Tensor) -> Tensor:
    """Euclidean norm of each row: (n, d) -> (n, 1). Zero rows get zero grad."""
    norms = np.sqrt(np.sum(a.data * a.data, axis=1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)

    def backward(g):
        _accum(a, g * a.data / safe)

    return _node(norms, (a,), backward)


def batch_norm_train(a: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Per-column normalization over the batch; returns (out, mean, var).

    mean/var are plain arrays (biased variance) for the caller's running
    statistics. Batch size must be >= 2.
    """
    b = a.data.shape[0]
    if b < 2:
        raise ValueError("batch norm in train mode needs batch size >= 2")
    mu = a.data.mean(axis=0, keepdims=True)
    var = a.data.var(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    data = gamma.data * xhat + beta.data

    def backward(g):
        _accum(beta, g.sum(axis=0, keepdims=True))
        _accum(gamma, (g * xhat).sum(axis=0, keepdims=True))
        dxhat = g * gamma.data
        dx = (inv / b) * (
            b * dxhat
            - dxhat.sum(axis=0, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=0, keepdims=True)
        )
        _accum(a, dx)

    return _node(data, (a, gamma, beta), backward), mu[0], var[0]


def batch_norm_eval(a: Tensor, gamma: Tensor, beta: Tensor, running_mean, running_var, eps: float) -> Tensor:
    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (a.data - running_mean) * inv
    data = gamma.data * xhat + beta.data

    def backward(g):
        _accum(beta, g.sum(axis=0, keepdims=True))
        _accum(gamma, (g * xhat).sum(axis=0, keepdims=True))
        _accum(a, g * gamma.data * inv)

    return _node(data, (a, gamma, beta), backward)


def pairwise_intra(a: Tensor) -> Tensor:
    """Sum of L1 distances over unordered row pairs of a single batch."""
    total, grad = kernels.pairwise_l1_intra(np.ascontiguousarray(a.data))

    def backward(g):
        _accum(a, g[0, 0] * grad)

    return _node(np.array([[total]]), (a,), backward)


def pairwise_inter(a: Tensor, b: Tensor) -> Tensor:
    """Sum of L1 distances over all cross pairs between two batches."""
    total, ga, gb = kernels.pairwise_l1_inter(
        np.ascontiguousarray(a.data), np.ascontiguousarray(b.data)
    )

    def backward(g):
        _accum(a, g[0, 0] * ga)
        _accum(b, g[0, 0] * gb)

    return _node(np.array([[total]]), (a, b), backward)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy between softmax(logits) and integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.data.shape[0]
    if labels.shape != (n,):
        raise ValueError("labels must be one integer per row")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    nll = -np.log(np.maximum(probs[np.arange(n), labels], 1e-300))
    data = np.array([[nll.mean()]])

    def backward(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        _accum(logits, g[0, 0] * d / n)

    return _node(data, (logits,), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Plain-array softmax used outside the graph (classifier inference)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)
