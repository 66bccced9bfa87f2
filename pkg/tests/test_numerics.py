import numpy as np
import pytest
from hypothesis import given, strategies as st

from nullspace_edit.numerics import (
    AsymmetryError,
    DimensionError,
    LinalgError,
    SingularMatrixError,
    as_matrix,
    eig_symmetric,
    frobenius_norm,
    solve_general,
    solve_with_condition,
)


def row_reduce_rank(m, tol=1e-9):
    """Rank by Gaussian elimination with partial pivoting (independent of LAPACK eig)."""
    a = [list(map(float, row)) for row in m]
    rows, cols = len(a), len(a[0])
    scale = max(abs(x) for row in a for x in row) or 1.0
    rank, r = 0, 0
    for c in range(cols):
        piv = max(range(r, rows), key=lambda i: abs(a[i][c]), default=None)
        if piv is None or abs(a[piv][c]) <= tol * scale:
            continue
        a[r], a[piv] = a[piv], a[r]
        for i in range(r + 1, rows):
            f = a[i][c] / a[r][c]
            a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        r += 1
        rank += 1
        if r == rows:
            break
    return rank


def test_as_matrix_rejects_nonfinite_and_bad_shapes():
    with pytest.raises(LinalgError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(LinalgError):
        as_matrix([[np.inf]])
    with pytest.raises(DimensionError):
        as_matrix([1.0, 2.0])
    with pytest.raises(DimensionError):
        as_matrix(np.zeros((3, 0)))
    assert as_matrix(np.zeros((3, 0)), allow_empty=True).shape == (3, 0)
    m = as_matrix([[1.0]])
    assert m.dtype == np.float64 and not m.flags.writeable


def test_eig_diagonal():
    eig = eig_symmetric(np.diag([1.0, 3.0, 0.0]))
    np.testing.assert_allclose(eig.eigenvalues, [3.0, 1.0, 0.0], atol=1e-15)
    # Eigenvectors are a signed permutation of the identity.
    np.testing.assert_allclose(np.abs(eig.eigenvectors), np.eye(3)[:, [1, 0, 2]], atol=1e-15)


def test_eig_identity():
    eig = eig_symmetric(np.eye(4))
    np.testing.assert_allclose(eig.eigenvalues, np.ones(4))
    u = eig.eigenvectors
    assert frobenius_norm(u.T @ u - np.eye(4)) <= 1e-10 * 4
    assert frobenius_norm(eig.reconstruct() - np.eye(4)) <= 1e-8 * 2


def test_eig_rank_matches_row_reduction(rng):
    k0 = rng.standard_normal((8, 5))
    expected_rank = row_reduce_rank(k0)
    assert expected_rank == 5
    eig = eig_symmetric(k0 @ k0.T)
    assert np.sum(np.abs(eig.eigenvalues) < 1e-10) == 8 - expected_rank


def test_eig_errors():
    with pytest.raises(DimensionError):
        eig_symmetric(np.zeros((2, 3)))
    with pytest.raises(AsymmetryError):
        eig_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_eig_one_by_one():
    eig = eig_symmetric(np.array([[2.5]]))
    assert eig.eigenvalues.tolist() == [2.5]
    assert abs(eig.eigenvectors[0, 0]) == 1.0


@given(n=st.integers(1, 128), seed=st.integers(0, 2**32 - 1))
def test_eig_reconstructs_random_psd(n, seed):
    rng = np.random.default_rng(seed)
    k = rng.standard_normal((n, rng.integers(1, 2 * n + 1)))
    g = k @ k.T
    eig = eig_symmetric(g)
    u = eig.eigenvectors
    assert np.all(np.diff(eig.eigenvalues) <= 0)
    assert frobenius_norm(u.T @ u - np.eye(n)) <= 1e-10 * n
    assert frobenius_norm(eig.reconstruct() - g) <= 1e-8 * frobenius_norm(g)
    assert eig.eigenvalues.min() >= -1e-10 * frobenius_norm(g)


def test_solve_identity_and_diagonal(rng):
    b = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(solve_general(np.eye(3), b), b)
    x = solve_general(np.diag([2.0, 4.0]), np.array([[2.0], [8.0]]))
    np.testing.assert_allclose(x, [[1.0], [2.0]], rtol=0, atol=1e-15)


def test_solve_residual_bound_nonsymmetric(rng):
    a = rng.standard_normal((10, 10)) + 5 * np.eye(10)
    b = rng.standard_normal((10, 4))
    x, cond = solve_with_condition(a, b)
    lhs = frobenius_norm(a @ x - b)
    assert lhs <= 1e-8 * (frobenius_norm(a) * frobenius_norm(x) + frobenius_norm(b))
    assert np.isfinite(cond) and cond >= 1.0


@pytest.mark.parametrize("cond", [1.0, 1e2, 1e4, 1e6])
def test_solve_recovers_x_up_to_cond_1e6(rng, cond):
    q1, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    q2, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    a = q1 @ np.diag(np.geomspace(1.0, 1.0 / cond, 12)) @ q2
    x = rng.standard_normal((12, 3))
    got = solve_general(a, a @ x)
    assert frobenius_norm(got - x) <= 1e-8 * frobenius_norm(x)


def test_singular_system_reports_pivot():
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError) as info:
        solve_general(a, np.ones((2, 1)))
    assert info.value.pivot < 1e-12 * frobenius_norm(a)
    assert "pivot" in str(info.value)


def test_solve_shape_errors():
    with pytest.raises(DimensionError):
        solve_general(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(DimensionError):
        solve_general(np.eye(2), np.ones((3, 1)))


@pytest.mark.parametrize(
    "m, expected",
    [(np.zeros((3, 2)), 0.0), (np.array([[3.0, 4.0]]), 5.0), (np.eye(4), 2.0)],
)
def test_frobenius_norm(m, expected):
    assert frobenius_norm(m) == expected
