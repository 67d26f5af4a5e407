"""Small dense numerical kernels: Cholesky, extreme eigenvalues, finite
differences. Everything here works on matrices of dimension at most ~100,
so plain dense algorithms are used throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence, NonFiniteEval, NotPositiveDefinite

PIVOT_TOL = 1e-12


def cholesky(cov) -> np.ndarray:
    """Lower-triangular L with L @ L.T reconstructing `cov`.

    Raises NotPositiveDefinite when any pivot drops to 1e-12 or below,
    which is the contract the samplers rely on.
    """
    a = np.array(cov, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("cholesky expects a square matrix")
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= PIVOT_TOL:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at index {j}")
        L[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def min_eig_sym(a) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    a = np.asarray(a, dtype=float)
    try:
        vals = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergence(str(exc)) from exc
    return float(vals[0])


def max_eig_sym(a) -> float:
    a = np.asarray(a, dtype=float)
    try:
        vals = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NoConvergence(str(exc)) from exc
    return float(vals[-1])


def finite_diff_grad(f, at, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    This is the independent oracle used to cross-check every analytic
    score in the test suite; keep it free of any problem-specific code.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(at, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = h
        hi = f(x + step)
        lo = f(x - step)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteEval(f"non-finite evaluation near coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad
