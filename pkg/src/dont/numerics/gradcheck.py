"""Finite-difference verification helpers for tape gradients."""

from __future__ import annotations

import numpy as np


def central_difference(f, x, step: float = 1e-5):
    """Numeric gradient of scalar f at array x by central differences."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = f(x)
        flat[i] = keep - step
        lo = f(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * step)
    return g


def gradients_match(analytic, numeric, rtol: float = 1e-4, atol: float = 1e-7) -> bool:
    """Compare tape gradient against finite differences, FD as reference."""
    return bool(np.allclose(analytic, numeric, rtol=rtol, atol=atol))
