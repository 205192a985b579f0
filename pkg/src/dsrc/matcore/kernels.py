"""Kernel backend selection.

The compiled extension is used when importable; setting ``DSRC_BACKEND``
to ``python`` forces the numpy fallback (useful for benchmarks and for
checking that both paths agree).
"""
import os

from . import _fallback

BACKEND = "python"
gemm_tiled = _fallback.gemm_tiled

if os.environ.get("DSRC_BACKEND", "").lower() != "python":
    try:
        from ._kernels import gemm_tiled  # noqa: F811
    except ImportError:
        pass
    else:
        BACKEND = "cython"

__all__ = ["BACKEND", "gemm_tiled"]
