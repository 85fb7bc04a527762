import numpy as np
import pytest

from kernelsolve import (
    InvalidArgumentError,
    NotSPDError,
    SingularMatrixError,
    cond1_estimate,
    dense_factor,
    dense_solve,
    pivoted_qr_id,
    solve_transposed,
)


def id_residual(A, result):
    approx = A[:, result.skel] @ result.coeff
    return np.linalg.norm(A - approx) / np.linalg.norm(A)


def test_id_identity_matrix():
    result = pivoted_qr_id(np.eye(5), 1e-8, 10)
    assert result.rank == 5
    assert sorted(result.skel) == [0, 1, 2, 3, 4]
    # coeff is a permuted identity
    assert np.array_equal(result.coeff[:, result.skel], np.eye(5))
    assert id_residual(np.eye(5), result) == 0.0


def test_id_duplicate_columns():
    col = np.array([[1.0], [2.0], [-1.0]])
    A = np.hstack([col, col])
    result = pivoted_qr_id(A, 1e-8, 10)
    assert result.rank == 1
    assert np.allclose(result.coeff, [[1.0, 1.0]])
    assert id_residual(A, result) <= 1e-14


def test_id_known_rank_recovery():
    rng = np.random.default_rng(77)
    A = rng.standard_normal((40, 7)) @ rng.standard_normal((7, 30))
    result = pivoted_qr_id(A, 1e-10, 30)
    assert result.rank == 7
    assert id_residual(A, result) <= 1e-8


def test_id_identity_on_skeleton_random_instances():
    rng = np.random.default_rng(5)
    for trial in range(100):
        m = int(rng.integers(3, 25))
        n = int(rng.integers(3, 25))
        r = int(rng.integers(1, min(m, n) + 1))
        A = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        result = pivoted_qr_id(A, 1e-9, 30)
        # exact identity on the skeleton columns, by construction
        assert np.array_equal(result.coeff[:, result.skel], np.eye(result.rank))
        assert len(set(result.skel.tolist())) == result.rank


def test_id_residual_bound_known_rank():
    rng = np.random.default_rng(15)
    for tol in (1e-4, 1e-8, 1e-12):
        for _ in range(10):
            r = int(rng.integers(1, 12))
            A = rng.standard_normal((30, r)) @ rng.standard_normal((r, 25))
            result = pivoted_qr_id(A, tol, 25)
            assert id_residual(A, result) <= 10.0 * tol


def test_id_max_rank_cap():
    rng = np.random.default_rng(25)
    A = rng.standard_normal((20, 20))
    result = pivoted_qr_id(A, 1e-14, 6)
    assert result.rank == 6


def test_id_full_rank_no_trigger():
    rng = np.random.default_rng(35)
    A = rng.standard_normal((8, 12))
    result = pivoted_qr_id(A, 1e-14, 50)
    assert result.rank == 8  # min(rows, cols) when the test never fires


def test_id_all_zero_degenerate():
    result = pivoted_qr_id(np.zeros((6, 4)), 1e-8, 10)
    assert result.rank == 1
    assert result.degenerate
    assert result.skel.tolist() == [0]
    assert result.coeff.shape == (1, 4)


def test_id_validation():
    with pytest.raises(InvalidArgumentError):
        pivoted_qr_id(np.eye(3), 0.0, 5)
    with pytest.raises(InvalidArgumentError):
        pivoted_qr_id(np.eye(3), 1.5, 5)
    with pytest.raises(InvalidArgumentError):
        pivoted_qr_id(np.eye(3), 1e-8, 0)
    with pytest.raises(InvalidArgumentError):
        pivoted_qr_id(np.empty((0, 3)), 1e-8, 5)


def test_id_column_graded_scales():
    # columns spanning 12 orders of magnitude exercise the norm-downdate
    # recompute guard
    rng = np.random.default_rng(45)
    scales = 10.0 ** np.arange(0, -12, -1)
    A = rng.standard_normal((24, 12)) * scales
    result = pivoted_qr_id(A, 1e-6, 12)
    assert 1 <= result.rank <= 12
    assert id_residual(A, result) <= 1e-5


def test_dense_factor_identity():
    f = dense_factor(np.eye(4), "cholesky")
    b = np.array([1.0, -2.0, 3.0, 0.5])
    assert np.array_equal(dense_solve(f, b), b)


def test_dense_factor_diagonal():
    f = dense_factor(np.diag([2.0, 4.0]), "cholesky")
    assert np.allclose(dense_solve(f, np.array([2.0, 4.0])), [1.0, 1.0])


@pytest.mark.parametrize("kind", ["cholesky", "lu-partial-pivot"])
def test_dense_factor_residual_spd(kind):
    rng = np.random.default_rng(7)
    G = rng.standard_normal((50, 50))
    A = G.T @ G + np.eye(50)
    f = dense_factor(A, kind)
    b = rng.standard_normal(50)
    x = dense_solve(f, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-12


def test_dense_factor_residual_conditioned_sweep():
    # residual stays below 1e-10 * ||A|| * ||X|| for condition up to 1e6
    rng = np.random.default_rng(70)
    for cond in (1e2, 1e4, 1e6):
        n = 40
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        vals = np.logspace(0, -np.log10(cond), n)
        A = (Q * vals) @ Q.T
        for kind in ("cholesky", "lu-partial-pivot"):
            f = dense_factor(A, kind)
            B = rng.standard_normal((n, 3))
            X = dense_solve(f, B)
            resid = np.linalg.norm(A @ X - B)
            assert resid <= 1e-10 * np.linalg.norm(A) * np.linalg.norm(X)


def test_dense_solve_empty_and_columnwise():
    rng = np.random.default_rng(17)
    A = rng.standard_normal((10, 10)) + 10 * np.eye(10)
    f = dense_factor(A, "lu-partial-pivot")
    empty = dense_solve(f, np.empty((10, 0)))
    assert empty.shape == (10, 0)
    B = rng.standard_normal((10, 4))
    X = dense_solve(f, B)
    for j in range(4):
        xj = dense_solve(f, B[:, j])
        assert np.allclose(X[:, j], xj, rtol=1e-13, atol=1e-15)


def test_dense_solve_inverse_identity():
    rng = np.random.default_rng(27)
    G = rng.standard_normal((20, 20))
    A = G.T @ G + np.eye(20)
    f = dense_factor(A, "cholesky")
    X = dense_solve(f, A)
    assert np.linalg.norm(X - np.eye(20)) <= 1e-10


def test_cholesky_rejects_indefinite():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
    with pytest.raises(NotSPDError):
        dense_factor(A, "cholesky")


def test_lu_rejects_exactly_singular():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError):
        dense_factor(A, "lu-partial-pivot")


def test_lu_handles_zero_leading_pivot():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    f = dense_factor(A, "lu-partial-pivot")
    assert np.allclose(dense_solve(f, np.array([3.0, 4.0])), [4.0, 3.0])


def test_solve_transposed_matches_lapack():
    rng = np.random.default_rng(37)
    A = rng.standard_normal((15, 15)) + 5 * np.eye(15)
    f = dense_factor(A, "lu-partial-pivot")
    B = rng.standard_normal((15, 2))
    want = np.linalg.solve(A.T, B)
    assert np.allclose(solve_transposed(f, B), want, rtol=1e-11, atol=1e-13)


def test_solve_dimension_mismatch():
    f = dense_factor(np.eye(3), "cholesky")
    with pytest.raises(InvalidArgumentError):
        dense_solve(f, np.zeros(4))


def test_cond1_estimate_order_of_magnitude():
    rng = np.random.default_rng(47)
    for target in (1e1, 1e3, 1e6):
        n = 30
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        vals = np.logspace(0, -np.log10(target), n)
        A = (Q * vals) @ Q.T
        true = np.linalg.cond(A, 1)
        f = dense_factor(A, "lu-partial-pivot")
        est = cond1_estimate(f)
        # Hager's estimator lower-bounds the true 1-norm condition and is
        # rarely off by more than a small factor
        assert est <= true * 1.01
        assert est >= true * 0.05
