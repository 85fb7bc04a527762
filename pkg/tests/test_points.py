import struct

import numpy as np
import pytest

from kernelsolve import (
    DataFormatError,
    InvalidArgumentError,
    PointSet,
    gen_synthetic,
    load_points,
    save_points,
)
from kernelsolve.points import mixture_centers


def test_pointset_basic():
    pts = PointSet(np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]))
    assert pts.n == 3
    assert pts.d == 2
    assert np.array_equal(pts.ids, np.arange(3))


def test_pointset_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        PointSet(np.array([[0.0], [np.nan]]))
    with pytest.raises(InvalidArgumentError):
        PointSet(np.array([[np.inf, 0.0]]))


def test_pointset_rejects_empty_and_bad_shape():
    with pytest.raises(InvalidArgumentError):
        PointSet(np.empty((0, 3)))
    with pytest.raises(InvalidArgumentError):
        PointSet(np.zeros(4))


def test_load_csv_two_points(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("0,0\n1,0\n")
    pts = load_points(path, "csv")
    assert pts.n == 2
    assert pts.d == 2
    assert np.array_equal(pts.coords, np.array([[0.0, 0.0], [1.0, 0.0]]))


def test_load_binary_header(tmp_path):
    path = tmp_path / "pts.bin"
    payload = struct.pack("<QQ", 3, 1) + struct.pack("<3d", 1.5, -2.5, 0.25)
    path.write_bytes(payload)
    pts = load_points(path, "f64-binary")
    assert pts.n == 3
    assert pts.d == 1
    assert np.array_equal(pts.coords[:, 0], np.array([1.5, -2.5, 0.25]))


@pytest.mark.parametrize("fmt", ["csv", "f64-binary"])
def test_save_load_roundtrip_bit_exact(tmp_path, fmt):
    rng = np.random.default_rng(17)
    pts = PointSet(rng.standard_normal((37, 5)) * np.pi)
    path = tmp_path / f"pts.{fmt}"
    save_points(pts, path, fmt)
    back = load_points(path, fmt)
    assert back.coords.tobytes() == pts.coords.tobytes()


def test_load_csv_ragged_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,0\n1\n")
    with pytest.raises(DataFormatError, match="row 2"):
        load_points(path, "csv")


def test_load_csv_non_numeric_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,0\n1,zap\n")
    with pytest.raises(DataFormatError, match="row 2"):
        load_points(path, "csv")


def test_load_csv_nonfinite_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,0\nnan,1\n")
    with pytest.raises(DataFormatError):
        load_points(path, "csv")


def test_load_binary_truncated_reports_offset(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(struct.pack("<QQ", 4, 2) + b"\x00" * 24)
    with pytest.raises(DataFormatError, match="byte offset"):
        load_points(path, "f64-binary")


def test_load_binary_short_header(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x01\x02\x03")
    with pytest.raises(DataFormatError, match="header"):
        load_points(path, "f64-binary")


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(InvalidArgumentError):
        load_points(tmp_path / "x", "parquet")


def test_gen_synthetic_deterministic():
    a = gen_synthetic("uniform-cube", 4, 2, seed=7)
    b = gen_synthetic("uniform-cube", 4, 2, seed=7)
    assert a.coords.tobytes() == b.coords.tobytes()
    c = gen_synthetic("uniform-cube", 4, 2, seed=8)
    assert a.coords.tobytes() != c.coords.tobytes()


def test_gen_synthetic_shapes_and_ranges():
    pts = gen_synthetic("uniform-cube", 200, 3, seed=1)
    assert pts.coords.shape == (200, 3)
    assert np.all(pts.coords >= 0.0) and np.all(pts.coords <= 1.0)


def test_helix_radius_invariant():
    pts = gen_synthetic("helix", 300, 4, seed=2)
    r2 = pts.coords[:, 0] ** 2 + pts.coords[:, 1] ** 2
    assert np.max(np.abs(r2 - 1.0)) <= 1e-12
    # coordinates beyond the third are identically zero
    assert np.all(pts.coords[:, 3] == 0.0)


def test_helix_requires_three_dims():
    with pytest.raises(InvalidArgumentError):
        gen_synthetic("helix", 10, 2, seed=0)


def test_unknown_kind_rejected():
    with pytest.raises(InvalidArgumentError):
        gen_synthetic("donut", 10, 2, seed=0)


def test_mixture_mean_statistical_bound():
    # sample mean should sit within 5 sigma / sqrt(n) of the mixture mean,
    # per coordinate; sigma includes the between-center spread
    n, d = 4000, 4
    pts = gen_synthetic("gaussian-mixture", n, d, seed=11)
    centers = mixture_centers(d)
    mix_mean = centers.mean(axis=0)
    mix_var = 1.0 + np.mean(centers**2, axis=0) - mix_mean**2
    bound = 5.0 * np.sqrt(mix_var / n)
    gap = np.abs(pts.coords.mean(axis=0) - mix_mean)
    assert np.all(gap <= bound), f"gap {gap} exceeds bound {bound}"


def test_mixture_center_count_caps():
    assert mixture_centers(1).shape[0] == 2
    assert mixture_centers(3).shape[0] == 4
    assert mixture_centers(4).shape[0] == 4
    assert mixture_centers(6).shape[0] == 8
    assert mixture_centers(12).shape[0] == 8
