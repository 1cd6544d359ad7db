import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def finite_diff_grads(build_loss, leaves, h=1e-5):
    """Central finite differences of build_loss() w.r.t. each leaf tensor.

    build_loss must rebuild the graph from the same leaf objects on every
    call. Returns (analytic, numeric) lists of arrays in leaf order."""
    for leaf in leaves:
        leaf.grad = None
    loss = build_loss()
    loss.backward()
    analytic = [
        leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)
        for leaf in leaves
    ]
    numeric = []
    for leaf in leaves:
        g = np.zeros_like(leaf.data)
        flat = leaf.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = build_loss().item()
            flat[i] = orig - h
            minus = build_loss().item()
            flat[i] = orig
            g.ravel()[i] = (plus - minus) / (2 * h)
        numeric.append(g)
    return analytic, numeric


def max_rel_error(analytic, numeric, floor=1e-3):
    # the floor keeps finite-difference noise on exactly-zero gradients from
    # registering as a huge relative error
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def assert_grads_match(build_loss, leaves, h=1e-5, rtol=1e-4):
    analytic, numeric = finite_diff_grads(build_loss, leaves, h)
    err = max_rel_error(analytic, numeric)
    assert err <= rtol, f"max relative gradient error {err:.3e} > {rtol}"
