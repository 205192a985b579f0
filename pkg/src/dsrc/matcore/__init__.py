"""Deterministic dense kernels and the DSMX matrix file format."""
from .io import FLOAT32, FLOAT64, decode_matrix, encode_matrix, read_matrix, write_matrix
from .kernels import BACKEND
from .linalg import (
    SpdMatrix,
    as_dense,
    cholesky_factor,
    gemm_blocked,
    resolve_tile,
    resolve_workers,
    solve_spd,
    solve_spd_right,
    symmetrize,
)

__all__ = [
    "BACKEND",
    "FLOAT32",
    "FLOAT64",
    "SpdMatrix",
    "as_dense",
    "cholesky_factor",
    "decode_matrix",
    "encode_matrix",
    "gemm_blocked",
    "read_matrix",
    "resolve_tile",
    "resolve_workers",
    "solve_spd",
    "solve_spd_right",
    "symmetrize",
    "write_matrix",
]
