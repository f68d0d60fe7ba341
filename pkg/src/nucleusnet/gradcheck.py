"""Central finite-difference utilities for verifying analytic gradients.

These checks are meant to run in 64-bit mode so that the O(h^2) truncation
error of central differences stays well below the tolerances being asserted.
"""

from __future__ import annotations

import numpy as np


def numerical_grad(f, x, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central-difference gradient of scalar f at x.

    ``indices`` restricts the probe to a subset of flat positions (the
    returned array then has one entry per probed index); by default every
    element is probed.
    """
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    indices = list(indices)
    out = np.empty(len(indices), dtype=np.float64)
    for pos, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        out[pos] = (fp - fm) / (2.0 * h)
    return out


def rel_error(a, b, zero_floor: float = 1e-8) -> float:
    """Worst-case elementwise relative error between two gradient arrays.

    Positions where both values are below ``zero_floor`` in magnitude count
    as exact agreement.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = np.maximum(np.abs(a), np.abs(b))
    ok = denom <= zero_floor
    denom = np.where(ok, 1.0, denom)
    err = np.abs(a - b) / denom
    err[ok] = 0.0
    return float(err.max()) if err.size else 0.0


def sample_indices(size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw up to ``count`` distinct flat indices to probe."""
    if size <= count:
        return np.arange(size)
    return rng.choice(size, size=count, replace=False)
