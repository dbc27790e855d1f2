"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""
from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch


def check_state(x, n: int, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != n:
        raise DimensionMismatch(f"{name} has dimension {x.shape[0]}, expected {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_states(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n:
        raise DimensionMismatch(f"expected an array of shape (k, {n}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("states contain non-finite values")
    return X


def check_spd(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a symmetric positive-definite float matrix or raise ValueError."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square")
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None
    return M
