"""Compare the compiled and pure-Python dilation kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hbyield.defect import build_lut_w2w
from hbyield.kernels import available_backends, dilate
from hbyield.layout import DieSpec, build_layout
from hbyield.morphology import rasterize_segment_cells


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")

    rng = np.random.default_rng(0)
    rows = []
    for size in (64, 256, 1024):
        img = rng.random((size, size)) < 0.2
        se = rasterize_segment_cells(size // 2, 0.5, (1.0, 1.0)).offsets
        times = {b: _best(lambda b=b: dilate(img, se, backend=b), args.repeat) for b in backends}
        rows.append((f"dilate {size}x{size}, {len(se)} offsets", times))

    die = DieSpec()
    for res in (400.0, 200.0):
        layout = build_layout("peripheral", die, (res, res))
        times = {b: _best(lambda b=b: build_lut_w2w(layout, 15000.0, backend=b), 1)
                 for b in backends}
        rows.append((f"W2W table, peripheral @ {res:.0f} um", times))

    for name, times in rows:
        cells = "  ".join(f"{b}={t * 1e3:9.2f} ms" for b, t in times.items())
        ratio = ""
        if "cython" in times and "python" in times:
            ratio = f"  speedup={times['python'] / times['cython']:.1f}x"
        print(f"{name:40s} {cells}{ratio}")


if __name__ == "__main__":
    main()
