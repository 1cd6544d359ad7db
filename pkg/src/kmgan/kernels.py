"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The backend is picked once at import time from the KMGAN_BACKEND environment
variable: "numba" (default when numba imports), "numpy" forces the fallback.
Both backends must produce identical results; tests and the benchmark in
benchmarks/bench_kernels.py compare them.
"""

import os

import numpy as np

_requested = os.environ.get("KMGAN_BACKEND", "auto").lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(f"KMGAN_BACKEND must be auto|numba|numpy, got {_requested!r}")

_use_numba = False
if _requested in ("auto", "numba"):
    try:
        from numba import njit

        _use_numba = True
    except ImportError:
        if _requested == "numba":
            raise


def _nearest_centers_np(features, centers):
    # squared distances via the expansion trick; argmin takes the first
    # (smallest-index) minimiser, which is the declared tie-break
    d2 = (
        np.sum(features * features, axis=1)[:, None]
        - 2.0 * features @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1).astype(np.int64)


def _pairwise_l1_intra_np(f):
    # sum over unordered pairs i<j of ||f_i - f_j||_1, plus elementwise gradient
    diff = f[:, None, :] - f[None, :, :]
    total = 0.5 * np.sum(np.abs(diff))
    grad = np.sum(np.sign(diff), axis=1)
    return total, grad


def _pairwise_l1_inter_np(a, b):
    diff = a[:, None, :] - b[None, :, :]
    total = np.sum(np.abs(diff))
    s = np.sign(diff)
    return total, np.sum(s, axis=1), -np.sum(s, axis=0)


if _use_numba:

    @njit(cache=True)
    def _nearest_centers_nb(features, centers):
        n, d = features.shape
        k = centers.shape[0]
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            best = 0
            best_d = np.inf
            for m in range(k):
                acc = 0.0
                for t in range(d):
                    delta = features[i, t] - centers[m, t]
                    acc += delta * delta
                if acc < best_d:
                    best_d = acc
                    best = m
            labels[i] = best
        return labels

    @njit(cache=True)
    def _pairwise_l1_intra_nb(f):
        n, d = f.shape
        total = 0.0
        grad = np.zeros((n, d))
        for i in range(n):
            for j in range(i + 1, n):
                for t in range(d):
                    delta = f[i, t] - f[j, t]
                    total += abs(delta)
                    s = np.sign(delta)
                    grad[i, t] += s
                    grad[j, t] -= s
        return total, grad

    @njit(cache=True)
    def _pairwise_l1_inter_nb(a, b):
        n, d = a.shape
        m = b.shape[0]
        total = 0.0
        ga = np.zeros((n, d))
        gb = np.zeros((m, d))
        for i in range(n):
            for j in range(m):
                for t in range(d):
                    delta = a[i, t] - b[j, t]
                    total += abs(delta)
                    s = np.sign(delta)
                    ga[i, t] += s
                    gb[j, t] -= s
        return total, ga, gb

    nearest_centers = _nearest_centers_nb
    pairwise_l1_intra = _pairwise_l1_intra_nb
    pairwise_l1_inter = _pairwise_l1_inter_nb
    BACKEND = "numba"
else:
    nearest_centers = _nearest_centers_np
    pairwise_l1_intra = _pairwise_l1_intra_np
    pairwise_l1_inter = _pairwise_l1_inter_np
    BACKEND = "numpy"
