"""Dense linear algebra used by every solver step.

Matrices are plain C-contiguous ``float64`` numpy arrays. Covariances are
wrapped in :class:`SpdMatrix`, which certifies symmetry and carries its
Cholesky factor so repeated solves against the same matrix factor once.
"""
import os

import numpy as np
from scipy.linalg import lapack, solve_triangular

from ..errors import ContractError, NotSpdError
from . import kernels

DEFAULT_TILE = 64
SYMMETRY_RTOL = 1e-10
JITTER_SCALE = 1e-10
JITTER_DOUBLINGS = 3


def resolve_tile(tile=None):
    """Tile edge: explicit argument, else ``DSRC_TILE``, else 64."""
    if tile is None:
        env = os.environ.get("DSRC_TILE")
        tile = int(env) if env else DEFAULT_TILE
    tile = int(tile)
    if tile < 1:
        raise ContractError(f"tile size must be positive, got {tile}")
    return tile


def resolve_workers(workers=None):
    """Worker count: explicit argument, else ``DSRC_WORKERS``, else 1."""
    if workers is None:
        env = os.environ.get("DSRC_WORKERS")
        workers = int(env) if env else 1
    workers = int(workers)
    if workers < 1:
        raise ContractError(f"worker count must be positive, got {workers}")
    return workers


def as_dense(x, name="matrix"):
    """Validate ``x`` as a finite 2-D matrix and return a float64 C array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains NaN or Inf")
    return arr


class SpdMatrix:
    """A symmetric positive-definite matrix together with its Cholesky factor.

    Construction checks symmetry to ``1e-10`` relative to the largest entry
    and factorises; either failure raises :class:`NotSpdError`. The stored
    array is read-only.
    """

    __slots__ = ("array", "chol")

    def __init__(self, array, chol=None):
        arr = as_dense(array, "SPD matrix")
        n = arr.shape[0]
        if arr.shape != (n, n):
            raise ContractError(f"SPD matrix must be square, got {arr.shape}")
        if n:
            scale = np.max(np.abs(arr))
            asym = np.max(np.abs(arr - arr.T))
            if asym > SYMMETRY_RTOL * scale:
                raise NotSpdError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
        if chol is None:
            chol = _potrf(arr)
        arr = arr.copy() if arr.flags.writeable else arr
        arr.flags.writeable = False
        chol.flags.writeable = False
        self.array = arr
        self.chol = chol

    @property
    def shape(self):
        return self.array.shape

    @property
    def dim(self):
        return self.array.shape[0]

    def trace(self):
        return float(np.trace(self.array))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.array
        return self.array.astype(dtype)

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim}, trace={self.trace():.6g})"


def _potrf(arr):
    n = arr.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    chol, info = lapack.dpotrf(arr, lower=1, clean=1)
    if info > 0:
        raise NotSpdError(f"non-positive Cholesky pivot at index {info - 1}", pivot=info - 1)
    if info < 0:
        raise ContractError(f"dpotrf rejected argument {-info}")
    return np.ascontiguousarray(chol)


def gemm_blocked(a, b, transpose_a=False, transpose_b=False, *, tile=None, workers=None):
    """Tiled dense product ``op(a) @ op(b)``.

    Each output element is reduced over the inner dimension in ascending
    order, so the result equals the naive triple loop bit for bit and does
    not depend on ``workers``.

    Parameters
    ----------
    a, b : array_like
        Finite 2-D operands.
    transpose_a, transpose_b : bool
        Use the transpose of the corresponding operand.
    tile : int, optional
        Tile edge; defaults to ``DSRC_TILE`` or 64.
    workers : int, optional
        Parallel workers; defaults to ``DSRC_WORKERS`` or 1.

    Returns
    -------
    numpy.ndarray
        The product, float64, C-contiguous.
    """
    a = as_dense(a, "a")
    b = as_dense(b, "b")
    if transpose_a:
        a = np.ascontiguousarray(a.T)
    if transpose_b:
        b = np.ascontiguousarray(b.T)
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"gemm dimension mismatch: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    kernels.gemm_tiled(a, b, out, resolve_tile(tile), resolve_workers(workers))
    return out


def cholesky_factor(a):
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises :class:`NotSpdError` carrying the failing pivot index.
    """
    if isinstance(a, SpdMatrix):
        return np.array(a.chol)
    arr = as_dense(a, "a")
    if arr.shape[0] != arr.shape[1]:
        raise ContractError(f"cholesky needs a square matrix, got {arr.shape}")
    return _potrf(arr)


def _spd(a):
    return a if isinstance(a, SpdMatrix) else SpdMatrix(a)


def solve_spd(a, b):
    """Solve ``a @ X = b`` for SPD ``a`` by forward and back substitution."""
    a = _spd(a)
    b_arr = np.asarray(b, dtype=np.float64)
    vec = b_arr.ndim == 1
    b2 = as_dense(b_arr[:, None] if vec else b_arr, "b")
    if b2.shape[0] != a.dim:
        raise ContractError(f"solve dimension mismatch: {a.shape} vs {b2.shape}")
    y = solve_triangular(a.chol, b2, lower=True, check_finite=False)
    x = solve_triangular(a.chol, y, lower=True, trans="T", check_finite=False)
    x = np.ascontiguousarray(x)
    return x[:, 0] if vec else x


def solve_spd_right(b, a):
    """Solve ``X @ a = b`` for SPD ``a`` as a transposed left solve."""
    b = as_dense(b, "b")
    return np.ascontiguousarray(solve_spd(a, b.T).T)


def symmetrize(a):
    """Symmetric part of ``a`` as an :class:`SpdMatrix`.

    If the symmetric part fails to factor, a diagonal jitter of
    ``1e-10 * trace / dim`` is added and doubled up to three times before
    giving up with :class:`NotSpdError`.
    """
    arr = as_dense(a, "a")
    n = arr.shape[0]
    if arr.shape != (n, n):
        raise ContractError(f"symmetrize needs a square matrix, got {arr.shape}")
    sym = 0.5 * (arr + arr.T)
    try:
        return SpdMatrix(sym)
    except NotSpdError as exc:
        first = exc
    base = JITTER_SCALE * np.trace(sym) / max(n, 1)
    if not base > 0:
        raise NotSpdError(f"cannot jitter a matrix with non-positive trace: {first}", first.pivot)
    jitter = base
    for _ in range(JITTER_DOUBLINGS + 1):
        try:
            return SpdMatrix(sym + jitter * np.eye(n))
        except NotSpdError as exc:
            last = exc
        jitter *= 2.0
    raise NotSpdError(f"still not SPD after jitter {jitter / 2:.3e}: {last}", last.pivot)
