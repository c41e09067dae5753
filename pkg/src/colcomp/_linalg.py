"""Small shared linear-algebra helpers (internal)."""

from __future__ import annotations

import numpy as np


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part (a + a.T) / 2."""
    return 0.5 * (a + a.T)


def is_symmetric(a: np.ndarray, rtol: float = 1e-10) -> bool:
    scale = max(float(np.abs(a).max(initial=0.0)), 1e-300)
    return bool(np.abs(a - a.T).max(initial=0.0) <= rtol * scale)


def min_eigval(a: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(sym(a))[0])


def chol_is_pd(a: np.ndarray) -> bool:
    """Cheap positive-definiteness probe via Cholesky."""
    try:
        np.linalg.cholesky(a)
        return True
    except np.linalg.LinAlgError:
        return False


def require_spd(a: np.ndarray, name: str, rel_floor: float = 1e-12) -> None:
    """Raise ValueError unless `a` is symmetric with min eigenvalue above a
    scale-aware floor rel_floor * trace(a) / dim."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name}: expected a square matrix, got shape {a.shape}")
    if not is_symmetric(a):
        raise ValueError(f"{name}: matrix is not symmetric")
    lo = min_eigval(a)
    floor = rel_floor * float(np.trace(a)) / a.shape[0]
    if not lo > floor:
        raise ValueError(
            f"{name}: not positive definite (min eigenvalue {lo:.6e}, "
            f"required > {floor:.6e})"
        )


def solve_psd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for symmetric positive definite a."""
    try:
        c = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"matrix not positive definite in solve_psd: {exc}"
        ) from exc
    y = np.linalg.solve(c, b)
    return np.linalg.solve(c.T, y)
