from .small import (
    Matrix,
    cholesky_factor,
    cholesky_solve,
    gemm,
    matmul,
    matmul_tn,
    spd_solve,
    symmetrize,
)

__all__ = [
    "Matrix",
    "cholesky_factor",
    "cholesky_solve",
    "gemm",
    "matmul",
    "matmul_tn",
    "spd_solve",
    "symmetrize",
]
