"""Dense linear algebra and ODE integration primitives.

Vectors and matrices are plain numpy arrays (1-D and 2-D float64,
row-major). Everything here is a pure function; nothing is cached or
mutated, so values are safe to share across threads.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotSPD, RankDeficient

# Relative diagonal jitter levels tried when a Cholesky factorization fails.
JITTER_LEVELS = (1e-12, 1e-10, 1e-8)

SYMMETRY_RTOL = 1e-10
RANK_EIG_RATIO = 1e-12


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate x as a finite 1-D float vector, optionally of a given dimension."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise DimensionMismatch("vector has non-finite entries")
    return v


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate a as a finite 2-D float matrix, optionally of a given shape."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise DimensionMismatch(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionMismatch(f"expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise DimensionMismatch("matrix has non-finite entries")
    return m


def cholesky_factor(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric matrix, with diagonal jitter escalation.

    If the plain factorization fails, retries with A + delta*I for
    delta in JITTER_LEVELS * trace(A)/n. Decoder Jacobians can lose rank
    transiently, so escalating beats failing outright.

    Raises NotSPD when all jitter levels fail.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise DimensionMismatch(f"matrix must be square, got {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0)
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise NotSPD("matrix is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    base = abs(np.trace(a)) / n
    if base == 0.0:
        base = 1.0
    for level in JITTER_LEVELS:
        try:
            return np.linalg.cholesky(a + (level * base) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise NotSPD("Cholesky failed for all jitter levels")


def cholesky_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A via Cholesky.

    Applies the jitter escalation of cholesky_factor when the plain
    factorization fails.
    """
    a = as_matrix(a)
    factor = cholesky_factor(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"b has dimension {b.shape[0]}, expected {a.shape[0]}")
    y = solve_triangular(factor, b, lower=True)
    return solve_triangular(factor.T, y, lower=False)


def pseudo_left_inverse(a: np.ndarray) -> np.ndarray:
    """Left inverse (A^T A)^-1 A^T of a tall full-column-rank matrix.

    Raises RankDeficient when the eigenvalue ratio of A^T A falls below
    RANK_EIG_RATIO.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if rows < cols:
        raise DimensionMismatch(f"need rows >= cols, got {a.shape}")
    gram = a.T @ a
    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] <= RANK_EIG_RATIO * eigs[-1]:
        raise RankDeficient(
            f"eigenvalue ratio {eigs[0]:.3e}/{eigs[-1]:.3e} below {RANK_EIG_RATIO:.0e}"
        )
    return np.linalg.solve(gram, a.T)


def rk4_step(
    f: Callable[[float, np.ndarray], np.ndarray],
    y: np.ndarray,
    t: float,
    h: float,
) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step for y' = f(t, y)."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
