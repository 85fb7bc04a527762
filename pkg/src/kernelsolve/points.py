"""Point sets: the domain the kernel matrix is defined over.

A `PointSet` is n points in d dimensions with implicit global ids 0..n-1.
Files come in two formats: headerless CSV (one point per row, comma
separated) and a raw f64 binary layout (16-byte header of two little-endian
u64 `n, d`, then n*d little-endian float64 values row-major).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, InvalidArgumentError
from .rng import generator

SYNTHETIC_KINDS = ("gaussian-mixture", "uniform-cube", "helix")

_KIND_TAG = {"gaussian-mixture": 0x6D69, "uniform-cube": 0x6375, "helix": 0x6865}

_BINARY_HEADER = struct.Struct("<QQ")


@dataclass
class PointSet:
    """n points in d dimensions; coordinates are float64, ids are 0..n-1."""

    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[0] < 1 or coords.shape[1] < 1:
            raise InvalidArgumentError(
                f"coords must be a non-empty 2-D array, got shape {coords.shape}"
            )
        if not np.all(np.isfinite(coords)):
            raise InvalidArgumentError("coords contain non-finite values")
        self.coords = coords

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.int64)


def load_points(path, fmt: str) -> PointSet:
    """Read a PointSet from `path` in format "csv" or "f64-binary"."""
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "f64-binary":
        return _load_binary(path)
    raise InvalidArgumentError(f"unknown point format {fmt!r}")


def save_points(points: PointSet, path, fmt: str) -> None:
    """Write `points` to `path`; round-trips bit-for-bit through load_points."""
    if fmt == "csv":
        # 17 significant digits reproduce any float64 exactly
        with open(path, "w") as fh:
            for row in points.coords:
                fh.write(",".join(f"{v:.17g}" for v in row))
                fh.write("\n")
    elif fmt == "f64-binary":
        with open(path, "wb") as fh:
            fh.write(_BINARY_HEADER.pack(points.n, points.d))
            fh.write(np.ascontiguousarray(points.coords, dtype="<f8").tobytes())
    else:
        raise InvalidArgumentError(f"unknown point format {fmt!r}")


def _load_csv(path) -> PointSet:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DataFormatError(
                    f"{path}: row {lineno}: expected {width} columns, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in rows[-1]):
                raise DataFormatError(f"{path}: row {lineno}: non-finite value")
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return PointSet(np.asarray(rows, dtype=np.float64))


def _load_binary(path) -> PointSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _BINARY_HEADER.size:
        raise DataFormatError(
            f"{path}: truncated header, {len(raw)} bytes < {_BINARY_HEADER.size}"
        )
    n, d = _BINARY_HEADER.unpack_from(raw, 0)
    expected = _BINARY_HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: expected {expected} bytes for n={n}, d={d}, "
            f"got {len(raw)} (mismatch at byte offset {min(len(raw), expected)})"
        )
    if n < 1 or d < 1:
        raise DataFormatError(f"{path}: invalid header n={n}, d={d}")
    coords = np.frombuffer(raw, dtype="<f8", offset=_BINARY_HEADER.size).reshape(n, d)
    if not np.all(np.isfinite(coords)):
        bad = int(np.flatnonzero(~np.isfinite(coords).ravel())[0])
        raise DataFormatError(
            f"{path}: non-finite value at byte offset {_BINARY_HEADER.size + 8 * bad}"
        )
    return PointSet(coords.copy())


def gen_synthetic(kind: str, n: int, d: int, seed: int) -> PointSet:
    """Generate a deterministic synthetic point set.

    Kinds:
      - "gaussian-mixture": equal-weight unit-variance clusters centered on
        hypercube lattice vertices with spacing 10; the cluster count is 8,
        capped at 2^ceil(d/2).
      - "uniform-cube": uniform in [0, 1]^d.
      - "helix" (d >= 3): unit-radius helix, angle uniform on [0, 4*pi] with
        pitch 0.25; coordinates beyond the third are zero.
    """
    if kind not in SYNTHETIC_KINDS:
        raise InvalidArgumentError(f"unknown synthetic kind {kind!r}")
    if n < 1 or d < 1:
        raise InvalidArgumentError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if kind == "helix" and d < 3:
        raise InvalidArgumentError(f"helix requires d >= 3, got d={d}")

    rng = generator(seed, _KIND_TAG[kind])
    if kind == "uniform-cube":
        coords = rng.uniform(0.0, 1.0, size=(n, d))
    elif kind == "gaussian-mixture":
        centers = mixture_centers(d)
        assign = rng.integers(0, centers.shape[0], size=n)
        coords = centers[assign] + rng.standard_normal((n, d))
    else:
        t = rng.uniform(0.0, 4.0 * np.pi, size=n)
        coords = np.zeros((n, d))
        coords[:, 0] = np.cos(t)
        coords[:, 1] = np.sin(t)
        coords[:, 2] = 0.25 * t
    return PointSet(coords)


def mixture_centers(d: int) -> np.ndarray:
    """Cluster centers of the gaussian-mixture generator: lattice vertices.

    Cluster j occupies the vertex of the spacing-10 hypercube whose low bits
    match j, so all centers are distinct and pairwise well separated.
    """
    count = min(8, 2 ** ((d + 1) // 2))
    centers = np.zeros((count, d))
    for j in range(count):
        for b in range(d):
            if (j >> b) & 1:
                centers[j, b] = 10.0
    return centers
