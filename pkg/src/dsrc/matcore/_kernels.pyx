# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tiled GEMM.

Every output element accumulates ``a[i, k] * b[k, j]`` for ``k = 0 .. K-1``
in ascending order with one rounding per multiply and one per add, so the
result is bit-identical to the naive triple loop. Parallelism is over row
panels of the output only; no element is ever touched by two threads.
"""
from cython.parallel cimport prange


cdef inline Py_ssize_t _min(Py_ssize_t x, Py_ssize_t y) noexcept nogil:
    return x if x < y else y


cdef void _panel(const double* a, const double* b, double* c,
                 Py_ssize_t lda, Py_ssize_t ldb, Py_ssize_t ldc,
                 Py_ssize_t i0, Py_ssize_t i1,
                 Py_ssize_t j0, Py_ssize_t j1,
                 Py_ssize_t k0, Py_ssize_t k1) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double a0, a1, a2, a3
    cdef double* c0
    cdef double* c1
    cdef double* c2
    cdef double* c3
    cdef const double* brow

    i = i0
    # four output rows share each streamed row of b
    while i + 4 <= i1:
        c0 = c + i * ldc
        c1 = c0 + ldc
        c2 = c1 + ldc
        c3 = c2 + ldc
        for k in range(k0, k1):
            a0 = a[i * lda + k]
            a1 = a[(i + 1) * lda + k]
            a2 = a[(i + 2) * lda + k]
            a3 = a[(i + 3) * lda + k]
            brow = b + k * ldb
            for j in range(j0, j1):
                c0[j] = c0[j] + a0 * brow[j]
                c1[j] = c1[j] + a1 * brow[j]
                c2[j] = c2[j] + a2 * brow[j]
                c3[j] = c3[j] + a3 * brow[j]
        i = i + 4
    while i < i1:
        c0 = c + i * ldc
        for k in range(k0, k1):
            a0 = a[i * lda + k]
            brow = b + k * ldb
            for j in range(j0, j1):
                c0[j] = c0[j] + a0 * brow[j]
        i = i + 1


def gemm_tiled(const double[:, ::1] a, const double[:, ::1] b,
               double[:, ::1] out, Py_ssize_t tile, int workers):
    """Accumulate ``a @ b`` into the zero-initialised ``out`` in place."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t kdim = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    cdef Py_ssize_t n_panels, p, i0, i1, kk, jj
    if b.shape[0] != kdim or out.shape[0] != m or out.shape[1] != n:
        raise ValueError("gemm_tiled: shape mismatch")
    if tile < 1:
        raise ValueError("gemm_tiled: tile must be positive")
    if m == 0 or n == 0 or kdim == 0:
        return
    cdef const double* pa = &a[0, 0]
    cdef const double* pb = &b[0, 0]
    cdef double* pc = &out[0, 0]
    n_panels = (m + tile - 1) // tile
    for p in prange(n_panels, nogil=True, num_threads=workers,
                    schedule="static"):
        i0 = p * tile
        i1 = _min(i0 + tile, m)
        kk = 0
        while kk < kdim:
            jj = 0
            while jj < n:
                _panel(pa, pb, pc, kdim, n, n, i0, i1,
                       jj, _min(jj + tile, n), kk, _min(kk + tile, kdim))
                jj = jj + tile
            kk = kk + tile
