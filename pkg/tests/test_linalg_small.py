import numpy as np
import pytest
from hypothesis import given, strategies as st

from opennmpc.errors import DimensionMismatchError, NotPositiveDefiniteError
from opennmpc.linalg.small import (
    Matrix,
    cholesky_factor,
    cholesky_solve,
    gemm,
    matmul,
    matmul_tn,
    spd_solve,
)


def _spd(seed: int, n: int) -> np.ndarray:
    g = np.random.default_rng(seed).standard_normal((n, n))
    return g @ g.T + n * np.eye(n)


def test_cholesky_of_diagonal():
    L = cholesky_factor(np.array([[4.0, 0.0], [0.0, 9.0]]))
    np.testing.assert_array_equal(L, np.array([[2.0, 0.0], [0.0, 3.0]]))


def test_cholesky_2x2_example():
    L = cholesky_factor(np.array([[4.0, 2.0], [2.0, 3.0]]))
    np.testing.assert_allclose(L, np.array([[2.0, 0.0], [1.0, np.sqrt(2.0)]]), rtol=0, atol=1e-15)


def test_cholesky_rejects_indefinite_with_pivot():
    with pytest.raises(NotPositiveDefiniteError) as info:
        cholesky_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert info.value.pivot_index == 1
    assert info.value.pivot_value == pytest.approx(-3.0)


def test_cholesky_rejects_non_square():
    with pytest.raises(DimensionMismatchError):
        cholesky_factor(np.ones((2, 3)))


@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=10_000))
def test_cholesky_reconstructs(n, seed):
    A = _spd(seed, n)
    L = cholesky_factor(A)
    assert np.allclose(np.triu(L, 1), 0.0)
    np.testing.assert_allclose(L @ L.T, A, rtol=1e-12, atol=1e-12 * np.abs(A).max())


@given(st.integers(min_value=1, max_value=8), st.integers(min_value=1, max_value=3), st.integers(min_value=0, max_value=10_000))
def test_cholesky_solve_matches_dense(n, m, seed):
    rng = np.random.default_rng(seed)
    A = _spd(seed, n)
    B = rng.standard_normal((n, m))
    X = cholesky_solve(cholesky_factor(A), B)
    np.testing.assert_allclose(A @ X, B, atol=1e-10)


def test_cholesky_solve_vector_rhs_keeps_shape():
    A = _spd(3, 4)
    b = np.arange(4.0)
    x = spd_solve(A, b)
    assert x.shape == (4,)
    np.testing.assert_allclose(A @ x, b, atol=1e-12)


def test_matrix_container_round_trip():
    a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    m = Matrix.from_array(a)
    assert m.shape == (2, 3)
    # column-major storage
    np.testing.assert_array_equal(m.data, [1.0, 4.0, 2.0, 5.0, 3.0, 6.0])
    np.testing.assert_array_equal(m.to_array(), a)
    assert isinstance(gemm(1.0, m, False, Matrix.identity(3), False), Matrix)


def test_matrix_rejects_bad_sizes():
    with pytest.raises(DimensionMismatchError):
        Matrix(rows=2, cols=2, data=np.zeros(3))
    with pytest.raises(DimensionMismatchError):
        Matrix(rows=0, cols=2, data=np.zeros(0))


def test_gemm_transposes_and_accumulates():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((3, 4))
    B = rng.standard_normal((5, 3))
    C = rng.standard_normal((4, 5))
    out = gemm(2.0, A, True, B, True, -0.5, C)
    np.testing.assert_allclose(out, 2.0 * A.T @ B.T - 0.5 * C, atol=1e-13)


def test_gemm_dimension_errors():
    with pytest.raises(DimensionMismatchError):
        gemm(1.0, np.ones((2, 3)), False, np.ones((2, 3)), False)
    with pytest.raises(DimensionMismatchError):
        gemm(1.0, np.ones((2, 3)), False, np.ones((3, 2)), False, 1.0, None)


def test_gemm_zero_inner_dimension():
    out = gemm(1.0, np.zeros((2, 0)), False, np.zeros((0, 3)), False)
    np.testing.assert_array_equal(out, np.zeros((2, 3)))


def test_matmul_helpers_accept_vectors():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    v = np.array([1.0, -1.0])
    np.testing.assert_array_equal(matmul(A, v), A @ v)
    np.testing.assert_array_equal(matmul_tn(A, v), A.T @ v)


def test_kernels_are_bitwise_repeatable():
    A = _spd(11, 6)
    B = np.random.default_rng(12).standard_normal((6, 2))
    first = cholesky_solve(cholesky_factor(A), B)
    second = cholesky_solve(cholesky_factor(A.copy()), B.copy())
    assert np.array_equal(first, second)
