"""Symmetric PSD matrix roots via eigendecomposition."""

from __future__ import annotations

import numpy as np

from ..exceptions import NotPsdError

_SYM_TOL = 1e-10
_EIG_TOL = 1e-10


def _check_symmetric_psd(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotPsdError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.abs(a - a.T) <= _SYM_TOL):
        raise NotPsdError(f"{name} is not symmetric to tolerance {_SYM_TOL}")
    w, v = np.linalg.eigh(a)
    if w.min(initial=0.0) < -_EIG_TOL:
        raise NotPsdError(f"{name} has negative eigenvalue {w.min():.3e}")
    return np.clip(w, 0.0, None), v


def psd_sqrt(a, name: str = "matrix"):
    """Unique symmetric PSD square root of a symmetric PSD matrix."""
    w, v = _check_symmetric_psd(a, name)
    b = (v * np.sqrt(w)) @ v.T
    return (b + b.T) / 2.0


def psd_inv_sqrt(a, name: str = "matrix"):
    """Inverse square root; requires strictly positive spectrum."""
    w, v = _check_symmetric_psd(a, name)
    if w.min(initial=np.inf) <= _EIG_TOL:
        raise NotPsdError(f"{name} is singular, cannot form inverse square root")
    b = (v / np.sqrt(w)) @ v.T
    return (b + b.T) / 2.0
