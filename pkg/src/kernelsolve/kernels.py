"""Kernel functions and dense kernel-block evaluation.

Families and formulas (r = ||x - y||):
  - gaussian:    k(x, y) = exp(-r^2 / (2 h^2))
  - laplace:     k(x, y) = exp(-r / h); at r = 0 the value is exactly 1,
                 no smoothing needed
  - polynomial:  k(x, y) = (x . y + c)^p

All three are symmetric. Block evaluation is vectorized but chunked so a
block never materializes more than ~128 MB of intermediate differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .points import PointSet
from .rng import generator

KERNEL_FAMILIES = ("gaussian", "laplace", "polynomial")

# cap on chunk_rows * cols * d elements in one difference tensor
_CHUNK_ELEMS = 1 << 24


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family with its parameters.

    bandwidth applies to gaussian/laplace (must be positive); degree and
    shift apply to polynomial (degree >= 1).
    """

    family: str
    bandwidth: float | None = None
    degree: int | None = None
    shift: float | None = None

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise InvalidArgumentError(f"unknown kernel family {self.family!r}")
        if self.family in ("gaussian", "laplace"):
            if self.bandwidth is None or not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
                raise InvalidArgumentError(
                    f"{self.family} kernel needs bandwidth > 0, got {self.bandwidth}"
                )
        else:
            if self.degree is None or int(self.degree) < 1:
                raise InvalidArgumentError(
                    f"polynomial kernel needs degree >= 1, got {self.degree}"
                )
            object.__setattr__(self, "degree", int(self.degree))
            shift = 0.0 if self.shift is None else float(self.shift)
            if not np.isfinite(shift):
                raise InvalidArgumentError(f"polynomial shift must be finite, got {shift}")
            object.__setattr__(self, "shift", shift)


def kernel_eval(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    """Evaluate k(x, y) for a single pair of points."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidArgumentError(f"point shapes differ: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite input point")
    return float(_eval_block(spec, x[None, :], y[None, :])[0, 0])


def kernel_block(
    spec: KernelSpec, points: PointSet, rows: np.ndarray, cols: np.ndarray
) -> np.ndarray:
    """Dense |rows| x |cols| block of the kernel matrix at the given ids."""
    rows = _check_ids(rows, points.n)
    cols = _check_ids(cols, points.n)
    return _eval_block(spec, points.coords[rows], points.coords[cols])


def _check_ids(ids, n: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise InvalidArgumentError(f"id list must be 1-D, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise InvalidArgumentError(f"point id out of range [0, {n})")
    return ids


def _eval_block(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], Y.shape[0]))
    d = max(1, X.shape[1])
    chunk = max(1, _CHUNK_ELEMS // max(1, Y.shape[0] * d))
    for lo in range(0, X.shape[0], chunk):
        hi = min(lo + chunk, X.shape[0])
        out[lo:hi] = _eval_chunk(spec, X[lo:hi], Y)
    return out


def _eval_chunk(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if spec.family == "polynomial":
        # einsum keeps the reduction order fixed, so transposed blocks of a
        # symmetric kernel agree bit-for-bit
        dots = np.einsum("id,jd->ij", X, Y)
        return (dots + spec.shift) ** spec.degree
    diff = X[:, None, :] - Y[None, :, :]
    sq = np.einsum("ijd,ijd->ij", diff, diff)
    h = spec.bandwidth
    if spec.family == "gaussian":
        return np.exp(sq / (-2.0 * h * h))
    return np.exp(-np.sqrt(sq) / h)


def kernel_trace(spec: KernelSpec, points: PointSet) -> float:
    """Trace of the full kernel matrix, sum of k(x_i, x_i)."""
    if spec.family in ("gaussian", "laplace"):
        return float(points.n)
    sq = np.einsum("id,id->i", points.coords, points.coords)
    return float(np.sum((sq + spec.shift) ** spec.degree))


def _pairwise_sq_dists_condensed(coords: np.ndarray) -> np.ndarray:
    n = coords.shape[0]
    parts = []
    for i in range(n - 1):
        diff = coords[i + 1 :] - coords[i]
        parts.append(np.einsum("jd,jd->j", diff, diff))
    return np.concatenate(parts) if parts else np.empty(0)


def median_pairwise_distance(
    points: PointSet, max_points: int = 4096, seed: int = 0
) -> float:
    """Median distance over all point pairs.

    Exact for n <= max_points; above that the median is taken over a seeded
    uniform subsample of max_points points.
    """
    coords = points.coords
    if points.n > max_points:
        idx = generator(seed, 0x6D64).choice(points.n, size=max_points, replace=False)
        coords = coords[np.sort(idx)]
    if coords.shape[0] < 2:
        raise InvalidArgumentError("need at least 2 points for a pairwise distance")
    return float(np.median(np.sqrt(_pairwise_sq_dists_condensed(coords))))


def min_pairwise_distance(points: PointSet) -> float:
    """Smallest distance between two distinct points (exact, O(n^2 d))."""
    if points.n < 2:
        raise InvalidArgumentError("need at least 2 points for a pairwise distance")
    best = np.inf
    coords = points.coords
    chunk = max(1, _CHUNK_ELEMS // max(1, points.n * points.d))
    for lo in range(0, points.n, chunk):
        hi = min(lo + chunk, points.n)
        diff = coords[lo:hi, None, :] - coords[None, :, :]
        sq = np.einsum("ijd,ijd->ij", diff, diff)
        for i in range(lo, hi):
            sq[i - lo, i] = np.inf
        best = min(best, float(sq.min()))
    return float(np.sqrt(best))
