"""Input validation helpers shared by the estimator classes."""

from __future__ import annotations

import numpy as np

from .errors import EmptySample


def as_points(W, name="W") -> np.ndarray:
    """Coerce to a 2-D float array of evaluation points."""
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError(f"{name} contains non-finite entries")
    return W


def as_targets(v, n, name="v") -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != n:
        raise ValueError(f"{name} has {v.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def require_rows(W, name="W") -> np.ndarray:
    W = as_points(W, name)
    if W.shape[0] == 0:
        raise EmptySample(f"{name} has no rows")
    return W
