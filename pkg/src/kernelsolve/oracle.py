"""Dense brute-force reference for accuracy measurements.

Everything here goes through explicitly materialized kernel matrices and
LAPACK (np.linalg), deliberately sharing no code with the fast path: the
tree solver uses its own factorizations, so agreement between the two is
evidence, not tautology.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .kernels import KernelSpec, kernel_block
from .points import PointSet

DEFAULT_ORACLE_CAP = 8192


def dense_kernel_matrix(points: PointSet, spec: KernelSpec, cap: int = DEFAULT_ORACLE_CAP) -> np.ndarray:
    """Materialize the full n x n kernel matrix, refusing oversized inputs."""
    if points.n > cap:
        raise InvalidArgumentError(
            f"dense oracle refused: n = {points.n} exceeds the cap of {cap}; "
            f"raise the cap explicitly if the cubic cost is acceptable"
        )
    ids = points.ids
    return kernel_block(spec, points, ids, ids)


def dense_matvec(
    points: PointSet,
    spec: KernelSpec,
    w: np.ndarray,
    cap: int = DEFAULT_ORACLE_CAP,
) -> np.ndarray:
    """Exact K @ w, streamed over row blocks so K is never fully stored."""
    if points.n > cap:
        raise InvalidArgumentError(
            f"dense oracle refused: n = {points.n} exceeds the cap of {cap}; "
            f"raise the cap explicitly if the quadratic cost is acceptable"
        )
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != points.n:
        raise InvalidArgumentError(f"vector has {w.shape[0]} rows, need {points.n}")
    n = points.n
    cols = points.ids
    out = np.empty_like(w)
    step = max(1, (1 << 23) // max(n, 1))
    for start in range(0, n, step):
        stop = min(start + step, n)
        out[start:stop] = kernel_block(spec, points, np.arange(start, stop), cols) @ w
    return out


def dense_oracle(
    points: PointSet,
    spec: KernelSpec,
    lam: float,
    B: np.ndarray,
    cap: int = DEFAULT_ORACLE_CAP,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve (K + lam*I) X = B densely; returns (X, K).

    B may be a vector or an n x q matrix. The returned K also serves as
    the exact matvec reference. O(n^3): guarded by the cap.
    """
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0.0:
        raise InvalidArgumentError(f"need lambda >= 0 and finite, got {lam}")
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != points.n:
        raise InvalidArgumentError(
            f"right-hand side has {B.shape[0]} rows, need {points.n}"
        )
    K = dense_kernel_matrix(points, spec, cap)
    X = np.linalg.solve(K + lam * np.eye(points.n), B)
    return X, K
