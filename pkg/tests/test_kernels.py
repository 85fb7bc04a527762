import numpy as np
import pytest

from kernelsolve import (
    InvalidArgumentError,
    KernelSpec,
    PointSet,
    gen_synthetic,
    kernel_block,
    kernel_eval,
    kernel_trace,
    median_pairwise_distance,
    min_pairwise_distance,
)


GAUSS = KernelSpec(family="gaussian", bandwidth=1.0)


def test_gaussian_zero_distance():
    x = np.array([0.3, -0.7])
    assert kernel_eval(GAUSS, x, x) == 1.0


def test_gaussian_analytic_value():
    x = np.zeros(2)
    y = np.array([1.0, 1.0])  # ||x-y|| = sqrt(2), so exp(-2/2) = exp(-1)
    assert kernel_eval(GAUSS, x, y) == pytest.approx(np.exp(-1.0), abs=1e-15)


def test_laplace_value_at_zero_distance():
    spec = KernelSpec(family="laplace", bandwidth=0.5)
    x = np.array([1.0, 2.0, 3.0])
    assert kernel_eval(spec, x, x) == 1.0


def test_laplace_scalar_reference():
    spec = KernelSpec(family="laplace", bandwidth=0.5)
    x = np.zeros(3)
    y = np.array([3.0, 0.0, 4.0])  # r = 5
    assert kernel_eval(spec, x, y) == pytest.approx(np.exp(-10.0), rel=1e-14)


def test_polynomial_hand_value():
    spec = KernelSpec(family="polynomial", degree=3, shift=1.0)
    x = np.array([1.0, 2.0])
    y = np.array([0.5, 0.25])  # x.y + 1 = 2, 2^3 = 8
    assert kernel_eval(spec, x, y) == pytest.approx(8.0, rel=1e-15)


def test_kernel_eval_symmetry():
    rng = np.random.default_rng(0)
    specs = [
        GAUSS,
        KernelSpec(family="laplace", bandwidth=2.0),
        KernelSpec(family="polynomial", degree=2, shift=0.5),
    ]
    for spec in specs:
        for _ in range(20):
            x = rng.standard_normal(4)
            y = rng.standard_normal(4)
            assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)


def test_kernel_eval_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        kernel_eval(GAUSS, np.array([np.nan]), np.array([0.0]))


def test_kernel_eval_rejects_dim_mismatch():
    with pytest.raises(InvalidArgumentError):
        kernel_eval(GAUSS, np.zeros(2), np.zeros(3))


def test_spec_validation():
    with pytest.raises(InvalidArgumentError):
        KernelSpec(family="gaussian", bandwidth=0.0)
    with pytest.raises(InvalidArgumentError):
        KernelSpec(family="gaussian")
    with pytest.raises(InvalidArgumentError):
        KernelSpec(family="polynomial", degree=0)
    with pytest.raises(InvalidArgumentError):
        KernelSpec(family="sigmoid", bandwidth=1.0)


def test_block_single_id():
    pts = PointSet(np.array([[1.0, 2.0], [3.0, 4.0]]))
    block = kernel_block(GAUSS, pts, [1], [1])
    assert block.shape == (1, 1)
    assert block[0, 0] == 1.0


def test_block_full_symmetric_unit_diagonal():
    pts = gen_synthetic("uniform-cube", 40, 3, seed=5)
    ids = pts.ids
    K = kernel_block(GAUSS, pts, ids, ids)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)


def test_block_matches_entrywise_loop():
    rng = np.random.default_rng(9)
    pts = PointSet(rng.standard_normal((12, 3)))
    rows = np.array([0, 3, 7, 9, 11])
    cols = np.array([1, 2, 4, 5, 6, 8, 10])
    for spec in (
        GAUSS,
        KernelSpec(family="laplace", bandwidth=0.7),
        KernelSpec(family="polynomial", degree=2, shift=1.5),
    ):
        block = kernel_block(spec, pts, rows, cols)
        for i, r in enumerate(rows):
            for j, c in enumerate(cols):
                want = kernel_eval(spec, pts.coords[r], pts.coords[c])
                assert block[i, j] == pytest.approx(want, rel=1e-14, abs=1e-300)


def test_block_transpose_exact():
    pts = gen_synthetic("gaussian-mixture", 30, 2, seed=3)
    rows = np.array([0, 5, 10, 29])
    cols = np.array([2, 3, 20])
    a = kernel_block(GAUSS, pts, rows, cols)
    b = kernel_block(GAUSS, pts, cols, rows)
    assert np.array_equal(a, b.T)


def test_block_rejects_bad_ids():
    pts = PointSet(np.zeros((4, 2)))
    with pytest.raises(InvalidArgumentError):
        kernel_block(GAUSS, pts, [0, 4], [1])
    with pytest.raises(InvalidArgumentError):
        kernel_block(GAUSS, pts, [-1], [1])


def test_offdiagonal_decay_as_bandwidth_shrinks():
    pts = gen_synthetic("uniform-cube", 25, 2, seed=8)
    ids = pts.ids
    off = ~np.eye(25, dtype=bool)
    prev = np.inf
    for h in (1e-1, 1e-2, 1e-3):
        K = kernel_block(KernelSpec(family="gaussian", bandwidth=h), pts, ids, ids)
        peak = float(np.max(K[off]))
        assert peak < prev
        prev = peak
    assert prev <= 1e-10


def test_kernel_trace():
    pts = gen_synthetic("uniform-cube", 50, 3, seed=2)
    assert kernel_trace(GAUSS, pts) == 50.0
    spec = KernelSpec(family="polynomial", degree=2, shift=1.0)
    want = sum((pts.coords[i] @ pts.coords[i] + 1.0) ** 2 for i in range(50))
    assert kernel_trace(spec, pts) == pytest.approx(want, rel=1e-12)


def test_median_pairwise_distance_small_oracle():
    rng = np.random.default_rng(21)
    pts = PointSet(rng.standard_normal((30, 3)))
    dists = []
    for i in range(30):
        for j in range(i + 1, 30):
            dists.append(np.linalg.norm(pts.coords[i] - pts.coords[j]))
    assert median_pairwise_distance(pts) == pytest.approx(np.median(dists), rel=1e-14)


def test_median_pairwise_distance_subsample_deterministic():
    pts = gen_synthetic("uniform-cube", 5000, 2, seed=4)
    a = median_pairwise_distance(pts, max_points=512, seed=0)
    b = median_pairwise_distance(pts, max_points=512, seed=0)
    assert a == b
    assert a > 0


def test_min_pairwise_distance_oracle():
    rng = np.random.default_rng(6)
    pts = PointSet(rng.standard_normal((40, 2)))
    best = np.inf
    for i in range(40):
        for j in range(i + 1, 40):
            best = min(best, np.linalg.norm(pts.coords[i] - pts.coords[j]))
    assert min_pairwise_distance(pts) == pytest.approx(best, rel=1e-14)
