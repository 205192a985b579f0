"""Pure-Python (numpy) kernels used when the compiled extension is absent.

The GEMM here follows the same per-element summation order as the compiled
kernel: ``out[i, j]`` receives ``a[i, k] * b[k, j]`` for ascending ``k``,
each product and each sum rounded separately. numpy never fuses the
multiply and the add, so results are bit-identical to the extension.
"""
import numpy as np


def gemm_tiled(a, b, out, tile, workers):
    """Accumulate ``a @ b`` into the zero-initialised ``out`` in place.

    ``tile`` and ``workers`` are accepted for signature compatibility; the
    rank-1 update order already fixes the reduction order, so neither
    changes the result.
    """
    m, kdim = a.shape
    if b.shape[0] != kdim or out.shape != (m, b.shape[1]):
        raise ValueError("gemm_tiled: shape mismatch")
    if tile < 1:
        raise ValueError("gemm_tiled: tile must be positive")
    prod = np.empty_like(out)
    for k in range(kdim):
        np.multiply(a[:, k, None], b[None, k, :], out=prod)
        out += prod
