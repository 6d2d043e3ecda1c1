"""Compare the compiled and numpy tridiagonal kernels.

Usage: ``python benchmarks/bench_kernels.py [--sizes 1000 4001 16001] [--eigs 4]``
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from magwkb import band1d
from magwkb.eigensolve import tridiag_smallest
from magwkb.kernels import get_backend


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1001, 4001, 16001])
    ap.add_argument("--eigs", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        get_backend("cython")
        backends = ["cython", "python"]
    except ImportError:
        print("compiled extension not built; timing the numpy fallback only")
        backends = ["python"]
    print(f"{'n':>7} {'kernel':>10} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for n in args.sizes:
        op = band1d.assemble_band_operator(0, 0.768, band1d.default_grid(0, n))
        d, e = op.diag, op.off
        e2 = e * e
        times = {}
        for b in backends:
            k = get_backend(b)
            times[("sturm", b)] = _time(lambda: [k.sturm_count(d, e2, x) for x in np.linspace(0, 5, 50)],
                                        args.repeat)
            times[("solve", b)] = _time(lambda: tridiag_smallest(d, e, args.eigs, backend=b), args.repeat)
        for kern in ("sturm", "solve"):
            row = [times[(kern, b)] for b in backends]
            sp = f"{row[1] / row[0]:8.1f}x" if len(row) == 2 else ""
            print(f"{n:>7} {kern:>10} " + " ".join(f"{t * 1e3:8.2f}ms" for t in row) + f"   {sp}")


if __name__ == "__main__":
    main()
