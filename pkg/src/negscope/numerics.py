"""Small float64 kernels shared by every layer.

Matrices are 2-d C-contiguous float64 arrays (row-major), vectors are 1-d
float64 arrays. Everything downstream (layers, losses, the CRF) goes through
these helpers, so double precision is locked in here once.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

Array = np.ndarray


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> Array:
    """Validate and return `a` as a 2-d float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"expected {cols} cols, got {m.shape[1]}")
    return np.ascontiguousarray(m)


def as_vector(a, length: int | None = None) -> Array:
    """Validate and return `a` as a 1-d float64 array."""
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got ndim={v.ndim}")
    if length is not None and v.shape[0] != length:
        raise ValueError(f"expected length {length}, got {v.shape[0]}")
    return v


def matvec(m: Array, v: Array) -> Array:
    """m (r, c) @ v (c,) -> (r,). Shape mismatch is a hard error."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: {m.shape} @ {v.shape}")
    return m @ v


def sigmoid(x):
    """Elementwise 1 / (1 + e^-x), evaluated on the overflow-safe branch."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def tanh_act(x):
    """Elementwise tanh."""
    out = np.tanh(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def softmax_probs(scores: Array) -> Array:
    """Softmax over a 1-d score vector, max-subtracted for stability."""
    s = as_vector(scores)
    if s.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(s - np.max(s))
    return e / np.sum(e)


def logsumexp(scores: Array) -> float:
    """log sum exp of a 1-d score vector, max-subtracted for stability."""
    s = as_vector(scores)
    if s.size == 0:
        raise ValueError("logsumexp of an empty vector")
    m = np.max(s)
    if not np.isfinite(m):
        raise ValueError("logsumexp of non-finite scores")
    return float(m + np.log(np.sum(np.exp(s - m))))


def finite_diff_grad(f: Callable[[Array], float], at: Array, eps: float = 1e-5) -> Array:
    """Central-difference gradient of scalar f at a point, one coordinate at a time."""
    x = np.array(at, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"objective non-finite near coordinate {i}")
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad
