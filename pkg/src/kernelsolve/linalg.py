"""Dense micro-kernels: pivoted-QR interpolative decomposition, Cholesky
and partially pivoted LU with multi-right-hand-side solves, and a 1-norm
condition estimator.

Everything here is implemented directly on numpy arrays (vectorized per
elimination step); no LAPACK factorization routines are called, which keeps
the fast path independent of the dense oracle used to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NotSPDError, SingularMatrixError

# recompute a downdated column norm once the estimate drops below 0.1x the
# value at the last recompute; guards against cancellation in the downdate
_NORM_GUARD = 0.01  # squared-norm threshold, (0.1)^2


@dataclass
class IDResult:
    """Interpolative decomposition A ~= A[:, skel] @ coeff.

    `skel` lists the selected column indices in pivot order; `coeff` is the
    rank x ncols interpolation matrix whose restriction to the skeleton
    columns is exactly the identity. `degenerate` marks an all-zero input
    that was forced to rank 1.
    """

    skel: np.ndarray
    coeff: np.ndarray
    rank: int
    degenerate: bool = False


def pivoted_qr_id(A: np.ndarray, tol: float, max_rank: int) -> IDResult:
    """Column-pivoted Householder QR truncated to an interpolative decomposition.

    Columns are accepted while the next diagonal of R stays above
    tol * |R[0, 0]|; the count is capped at max_rank (and at min(m, n)).
    The interpolation matrix solves the leading triangular system against
    the remaining columns and is mapped back through the pivot permutation.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidArgumentError(f"need a non-empty 2-D matrix, got shape {A.shape}")
    if not (0.0 < tol < 1.0):
        raise InvalidArgumentError(f"need 0 < tol < 1, got {tol}")
    if max_rank < 1:
        raise InvalidArgumentError(f"need max_rank >= 1, got {max_rank}")

    m, n = A.shape
    R = A.copy()
    piv = np.arange(n, dtype=np.int64)
    norms_est = np.einsum("ij,ij->j", R, R)
    norms_ref = norms_est.copy()

    limit = min(max_rank, m, n)
    r11 = None
    rank = limit
    for k in range(limit):
        j = k + int(np.argmax(norms_est[k:]))
        if j != k:
            R[:, [k, j]] = R[:, [j, k]]
            piv[[k, j]] = piv[[j, k]]
            norms_est[[k, j]] = norms_est[[j, k]]
            norms_ref[[k, j]] = norms_ref[[j, k]]

        x = R[k:, k]
        norm_x = float(np.sqrt(np.einsum("i,i->", x, x)))
        if k == 0:
            if norm_x == 0.0:
                return _degenerate_id(n)
            r11 = norm_x
        elif norm_x <= tol * r11:
            rank = k
            break

        # Householder reflector zeroing x below its head
        sign = 1.0 if x[0] >= 0.0 else -1.0
        v = x.copy()
        v[0] += sign * norm_x
        beta = 2.0 / float(np.einsum("i,i->", v, v))
        R[k:, k:] -= np.outer(beta * v, v @ R[k:, k:])
        R[k, k] = -sign * norm_x
        R[k + 1 :, k] = 0.0

        if k + 1 < n:
            norms_est[k + 1 :] -= R[k, k + 1 :] ** 2
            np.maximum(norms_est[k + 1 :], 0.0, out=norms_est[k + 1 :])
            stale = np.flatnonzero(norms_est[k + 1 :] < _NORM_GUARD * norms_ref[k + 1 :])
            if stale.size:
                cols = stale + k + 1
                fresh = np.einsum("ij,ij->j", R[k + 1 :, cols], R[k + 1 :, cols])
                norms_est[cols] = fresh
                norms_ref[cols] = fresh

    T = _solve_upper(R[:rank, :rank], R[:rank, rank:n])
    coeff = np.zeros((rank, n))
    coeff[np.arange(rank), piv[:rank]] = 1.0
    coeff[:, piv[rank:]] = T
    return IDResult(skel=piv[:rank].copy(), coeff=coeff, rank=rank)


def _degenerate_id(n: int) -> IDResult:
    coeff = np.zeros((1, n))
    coeff[0, 0] = 1.0
    return IDResult(
        skel=np.zeros(1, dtype=np.int64), coeff=coeff, rank=1, degenerate=True
    )


def _solve_upper(U: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Back substitution with an upper-triangular U against columns of B."""
    s = U.shape[0]
    X = np.array(B, dtype=np.float64, copy=True)
    for i in range(s - 1, -1, -1):
        if i + 1 < s:
            X[i] -= U[i, i + 1 :] @ X[i + 1 :]
        X[i] /= U[i, i]
    return X


def _solve_lower(L: np.ndarray, B: np.ndarray, unit: bool = False) -> np.ndarray:
    """Forward substitution with a lower-triangular L against columns of B."""
    n = L.shape[0]
    X = np.array(B, dtype=np.float64, copy=True)
    for i in range(n):
        if i > 0:
            X[i] -= L[i, :i] @ X[:i]
        if not unit:
            X[i] /= L[i, i]
    return X


def _solve_unit_upper(U: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = U.shape[0]
    X = np.array(B, dtype=np.float64, copy=True)
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            X[i] -= U[i, i + 1 :] @ X[i + 1 :]
    return X


@dataclass
class DenseFactor:
    """Factored square matrix supporting multi-right-hand-side solves.

    kind "cholesky" stores the lower factor; kind "lu-partial-pivot" stores
    the combined LU with its row-swap sequence. `norm1` keeps the 1-norm of
    the original matrix for condition estimation.
    """

    kind: str
    size: int
    norm1: float
    lower: np.ndarray | None = field(default=None, repr=False)
    lu: np.ndarray | None = field(default=None, repr=False)
    row_swaps: np.ndarray | None = field(default=None, repr=False)


def dense_factor(A: np.ndarray, kind: str = "cholesky") -> DenseFactor:
    """Factor a square matrix for repeated solves.

    Cholesky requires a symmetric positive definite input and raises
    NotSPDError on a non-positive pivot; LU with partial pivoting raises
    SingularMatrixError only when an entire pivot column is exactly zero.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"need a square matrix, got shape {A.shape}")
    n = A.shape[0]
    norm1 = float(np.abs(A).sum(axis=0).max()) if n else 0.0
    if kind == "cholesky":
        return DenseFactor(kind=kind, size=n, norm1=norm1, lower=_cholesky(A))
    if kind == "lu-partial-pivot":
        lu, swaps = _lu_partial_pivot(A)
        return DenseFactor(kind=kind, size=n, norm1=norm1, lu=lu, row_swaps=swaps)
    raise InvalidArgumentError(f"unknown factorization kind {kind!r}")


def _cholesky(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        col = A[j:, j] - L[j:, :j] @ L[j, :j]
        pivot = float(col[0])
        if pivot <= 0.0 or not np.isfinite(pivot):
            raise NotSPDError(f"non-positive pivot {pivot:.3e} at column {j}")
        ljj = np.sqrt(pivot)
        L[j, j] = ljj
        L[j + 1 :, j] = col[1:] / ljj
    return L


def _lu_partial_pivot(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = A.shape[0]
    LU = A.copy()
    swaps = np.arange(n, dtype=np.int64)
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if LU[p, k] == 0.0:
            raise SingularMatrixError(f"zero pivot column at elimination step {k}")
        swaps[k] = p
        if p != k:
            LU[[k, p]] = LU[[p, k]]
        if k + 1 < n:
            LU[k + 1 :, k] /= LU[k, k]
            LU[k + 1 :, k + 1 :] -= np.outer(LU[k + 1 :, k], LU[k, k + 1 :])
    return LU, swaps


def dense_solve(f: DenseFactor, B: np.ndarray) -> np.ndarray:
    """Solve A @ X = B for the matrix behind `f`; B may be a vector or matrix."""
    B = np.asarray(B, dtype=np.float64)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != f.size:
        raise InvalidArgumentError(
            f"right-hand side has {B.shape[0] if B.ndim else 0} rows, factor needs {f.size}"
        )
    if B.shape[1] == 0:
        X = B.copy()
    elif f.kind == "cholesky":
        X = _solve_upper_from_lower(f.lower, _solve_lower(f.lower, B))
    else:
        X = _lu_solve(f, B, trans=False)
    return X[:, 0] if vector else X


def _solve_upper_from_lower(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Back substitution with L.T without materializing the transpose."""
    n = L.shape[0]
    X = np.array(B, dtype=np.float64, copy=True)
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            X[i] -= L[i + 1 :, i] @ X[i + 1 :]
        X[i] /= L[i, i]
    return X


def _lu_solve(f: DenseFactor, B: np.ndarray, trans: bool) -> np.ndarray:
    X = np.array(B, dtype=np.float64, copy=True)
    n = f.size
    if not trans:
        for k in range(n):
            p = f.row_swaps[k]
            if p != k:
                X[[k, p]] = X[[p, k]]
        X = _solve_lower(f.lu, X, unit=True)
        return _solve_upper(f.lu, X)
    # A.T x = b: forward with U.T, back with unit L.T, then undo row swaps
    X = _solve_lower(f.lu.T, X, unit=False)
    X = _solve_unit_upper(f.lu.T, X)
    for k in range(n - 1, -1, -1):
        p = f.row_swaps[k]
        if p != k:
            X[[k, p]] = X[[p, k]]
    return X


def solve_transposed(f: DenseFactor, B: np.ndarray) -> np.ndarray:
    """Solve A.T @ X = B; for Cholesky factors this equals dense_solve."""
    if f.kind == "cholesky":
        return dense_solve(f, B)
    B = np.asarray(B, dtype=np.float64)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    if B.shape[0] != f.size:
        raise InvalidArgumentError(
            f"right-hand side has {B.shape[0]} rows, factor needs {f.size}"
        )
    X = _lu_solve(f, B, trans=True)
    return X[:, 0] if vector else X


def cond1_estimate(f: DenseFactor, max_iter: int = 5) -> float:
    """Hager-style 1-norm condition estimate ||A||_1 * est(||A^-1||_1)."""
    n = f.size
    if n == 0:
        return 0.0
    if n == 1:
        diag = f.lower[0, 0] ** 2 if f.kind == "cholesky" else f.lu[0, 0]
        return 1.0 if diag != 0 else np.inf
    x = np.full(n, 1.0 / n)
    est = 0.0
    for _ in range(max_iter):
        y = dense_solve(f, x)
        est = float(np.abs(y).sum())
        xi = np.where(y >= 0.0, 1.0, -1.0)
        z = solve_transposed(f, xi)
        j = int(np.argmax(np.abs(z)))
        if np.abs(z[j]) <= float(z @ x):
            break
        x = np.zeros(n)
        x[j] = 1.0
    if not np.isfinite(est):
        return np.inf
    return f.norm1 * est
