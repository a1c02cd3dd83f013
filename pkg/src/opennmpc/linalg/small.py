"""
Dense kernels for small matrices: Cholesky factor/solve and a general multiply.

The kernels never call into LAPACK or a threaded BLAS. Every reduction is an
explicit loop over the inner dimension in ascending order, built from numpy
element-wise operations only, so results are bitwise reproducible for a given
input no matter how many simulations run side by side. They are meant for
matrices of size up to ~64; there is no blocking.

All kernels accept either a ``Matrix`` or a 2-D numpy array. A ``Matrix`` in
gives a ``Matrix`` out; arrays in give arrays out (the solver hot paths use
arrays directly).
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from opennmpc.errors import DimensionMismatchError, NotPositiveDefiniteError


@dataclass(frozen=True)
class Matrix:
    """Column-major dense matrix of 64-bit reals"""
    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise DimensionMismatchError(f"Matrix dimensions must be positive, got {self.rows}x{self.cols}")
        data = np.ascontiguousarray(self.data, dtype=np.float64).reshape(-1)
        if data.size != self.rows * self.cols:
            raise DimensionMismatchError(
                f"Matrix data has {data.size} entries, expected {self.rows}*{self.cols}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array) -> 'Matrix':
        """Create a Matrix from any 2-D array-like (row-major nesting allowed)"""
        a = np.atleast_2d(np.asarray(array, dtype=np.float64))
        if a.ndim != 2:
            raise DimensionMismatchError(f"Expected a 2-D array, got ndim={a.ndim}")
        return cls(rows=a.shape[0], cols=a.shape[1], data=a.ravel(order="F"))

    @classmethod
    def identity(cls, n: int) -> 'Matrix':
        return cls.from_array(np.eye(n))

    def to_array(self) -> np.ndarray:
        return self.data.reshape((self.rows, self.cols), order="F").copy()

    @property
    def shape(self):
        return (self.rows, self.cols)


MatrixLike = Union[Matrix, np.ndarray]


def _as_array(a: MatrixLike, name: str) -> np.ndarray:
    if isinstance(a, Matrix):
        return a.to_array()
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got ndim={arr.ndim}")
    return arr


def _wrap(result: np.ndarray, like: MatrixLike):
    return Matrix.from_array(result) if isinstance(like, Matrix) else result


def cholesky_factor(a: MatrixLike) -> MatrixLike:
    """
    Lower-triangular Cholesky factor L with L @ L.T == A.

    Column-oriented (right-looking) elimination. Symmetry of ``a`` is the
    caller's responsibility; only the lower triangle is read.

    Args:
        a: Symmetric positive definite matrix.

    Returns:
        The lower-triangular factor, same container type as ``a``.

    Raises:
        NotPositiveDefiniteError: a pivot is not strictly positive (or not finite).
        DimensionMismatchError: ``a`` is not square.
    """
    work = _as_array(a, "A")
    n, m = work.shape
    if n != m:
        raise DimensionMismatchError(f"cholesky_factor needs a square matrix, got {n}x{m}")
    work = np.tril(work).astype(np.float64, copy=True)
    for j in range(n):
        pivot = work[j, j]
        if not (pivot > 0.0) or not np.isfinite(pivot):
            raise NotPositiveDefiniteError(
                f"Non-positive pivot {pivot:.3e} at column {j}", pivot_index=j, pivot_value=float(pivot)
            )
        ljj = np.sqrt(pivot)
        work[j, j] = ljj
        if j + 1 < n:
            col = work[j + 1:, j] / ljj
            work[j + 1:, j] = col
            # rank-1 update of the trailing lower triangle
            work[j + 1:, j + 1:] -= np.tril(np.multiply.outer(col, col))
    return _wrap(work, a)


def _forward_substitute(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = lower.shape[0]
    y = np.zeros_like(rhs)
    for i in range(n):
        acc = rhs[i, :].copy()
        for p in range(i):
            acc -= lower[i, p] * y[p, :]
        y[i, :] = acc / lower[i, i]
    return y


def _backward_substitute_transposed(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # solves L^T x = rhs
    n = lower.shape[0]
    x = np.zeros_like(rhs)
    for i in range(n - 1, -1, -1):
        acc = rhs[i, :].copy()
        for p in range(i + 1, n):
            acc -= lower[p, i] * x[p, :]
        x[i, :] = acc / lower[i, i]
    return x


def cholesky_solve(lower: MatrixLike, b: MatrixLike) -> MatrixLike:
    """
    Solve (L L^T) X = B given the factor from ``cholesky_factor``.

    Args:
        lower: Lower-triangular Cholesky factor.
        b: Right-hand side with as many rows as ``lower``; any number of columns.

    Returns:
        X, same container type as ``b``. A 1-D ``b`` gives a 1-D result.
    """
    vector_rhs = isinstance(b, np.ndarray) and b.ndim == 1
    l_arr = _as_array(lower, "L")
    b_arr = _as_array(b, "B").astype(np.float64, copy=True)
    n = l_arr.shape[0]
    if l_arr.shape[1] != n:
        raise DimensionMismatchError(f"L must be square, got {l_arr.shape}")
    if b_arr.shape[0] != n:
        raise DimensionMismatchError(f"B has {b_arr.shape[0]} rows, L has {n}")
    x = _backward_substitute_transposed(l_arr, _forward_substitute(l_arr, b_arr))
    if vector_rhs:
        return x[:, 0]
    return _wrap(x, b)


def gemm(
    alpha: float,
    a: MatrixLike,
    trans_a: bool,
    b: MatrixLike,
    trans_b: bool,
    beta: float = 0.0,
    c: Optional[MatrixLike] = None,
) -> MatrixLike:
    """
    alpha * op(A) @ op(B) + beta * C with a fixed ascending inner-index order.

    ``c`` may be omitted when ``beta`` is zero. The product is accumulated as a
    sum of outer products over the inner index, so no BLAS reduction is involved.
    """
    a_arr = _as_array(a, "A")
    b_arr = _as_array(b, "B")
    op_a = a_arr.T if trans_a else a_arr
    op_b = b_arr.T if trans_b else b_arr
    m, k = op_a.shape
    k2, n = op_b.shape
    if k != k2:
        raise DimensionMismatchError(f"gemm inner dimensions differ: op(A) is {m}x{k}, op(B) is {k2}x{n}")

    if c is None:
        if beta != 0.0:
            raise DimensionMismatchError("gemm with beta != 0 needs C")
        out = np.zeros((m, n))
    else:
        c_arr = _as_array(c, "C")
        if c_arr.shape != (m, n):
            raise DimensionMismatchError(f"C is {c_arr.shape}, expected {(m, n)}")
        out = beta * c_arr if beta != 0.0 else np.zeros((m, n))

    if alpha != 0.0 and k > 0:
        acc = np.zeros((m, n))
        for p in range(k):
            acc += np.multiply.outer(op_a[:, p], op_b[p, :])
        out = out + alpha * acc

    like = a if isinstance(a, Matrix) else (c if c is not None else a)
    return _wrap(out, like)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shorthand for gemm(1, a, False, b, False); 1-D ``b`` is treated as a column."""
    if b.ndim == 1:
        return gemm(1.0, a, False, b.reshape(-1, 1), False)[:, 0]
    return gemm(1.0, a, False, b, False)


def matmul_tn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a.T @ b through gemm; 1-D ``b`` is treated as a column."""
    if b.ndim == 1:
        return gemm(1.0, a, True, b.reshape(-1, 1), False)[:, 0]
    return gemm(1.0, a, True, b, False)


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A X = B for SPD A via cholesky_factor/cholesky_solve"""
    return cholesky_solve(cholesky_factor(a), b)
