"""Compare the compiled and pure-Python GEMM backends.

Usage::

    python benchmarks/bench_gemm.py [--sizes 64 128 256 330] [--repeat 3]

Both backends produce bit-identical results; this script checks that on
every size before timing.
"""
import argparse
import time

import numpy as np

from dsrc.matcore import _fallback, kernels
from dsrc.matcore.linalg import DEFAULT_TILE


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 330])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--tile", type=int, default=DEFAULT_TILE)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)

    compiled = None
    try:
        from dsrc.matcore._kernels import gemm_tiled as compiled
    except ImportError:
        print("compiled extension not built; timing the fallback only")
    print(f"active backend at import: {kernels.BACKEND}")
    print(f"{'n':>6} {'cython s':>10} {'GFLOP/s':>8} {'python s':>10} {'GFLOP/s':>8} "
          f"{'speedup':>8} {'numpy s':>9}")
    rng = np.random.default_rng(0)
    for n in args.sizes:
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        flops = 2.0 * n ** 3
        out_py = np.zeros((n, n))
        t_py = best_time(lambda: (out_py.fill(0.0),
                                  _fallback.gemm_tiled(a, b, out_py, args.tile, args.workers)),
                         args.repeat)
        t_np = best_time(lambda: a @ b, args.repeat)
        if compiled is not None:
            out_c = np.zeros((n, n))
            t_c = best_time(lambda: (out_c.fill(0.0),
                                     compiled(a, b, out_c, args.tile, args.workers)), args.repeat)
            if out_c.tobytes() != out_py.tobytes():
                raise SystemExit(f"backends disagree at n={n}")
            print(f"{n:>6} {t_c:>10.4f} {flops / t_c / 1e9:>8.2f} {t_py:>10.4f} "
                  f"{flops / t_py / 1e9:>8.2f} {t_py / t_c:>8.1f} {t_np:>9.4f}")
        else:
            print(f"{n:>6} {'-':>10} {'-':>8} {t_py:>10.4f} {flops / t_py / 1e9:>8.2f} "
                  f"{'-':>8} {t_np:>9.4f}")


if __name__ == "__main__":
    main()
