"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--size 640x360]

Backend outputs are checked against each other before the timings print.
"""
import argparse
import time

import numpy as np
from scipy import ndimage

from hv3d import kernels
from hv3d.noref import detect_edges


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", default="640x360", help="WxH")
    ap.add_argument("--block", type=int, default=16)
    ap.add_argument("--search", type=int, default=64)
    args = ap.parse_args(argv)

    w, h = (int(v) for v in args.size.lower().split("x"))
    rng = np.random.default_rng(0)
    base = ndimage.gaussian_filter(rng.uniform(0, 255, (h, w)), 1.2)
    other = np.roll(base, 5, axis=1) + rng.normal(0, 2, base.shape)
    m = args.block
    yy, xx = np.mgrid[0:h - m + 1:m, 0:w - m + 1:m]
    origins = np.column_stack([yy.ravel(), xx.ravel()])
    centers = origins + np.array([0, 5])
    edges, direction = detect_edges(base)

    cases = {
        "block_search": lambda b: kernels.block_search(base, other, origins, centers,
                                                       args.block, args.search, b),
        "edge_widths": lambda b: kernels.edge_widths(base, edges, direction, b),
    }
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        timings, outs = [], []
        for b in backends:
            t, out = best_of(lambda: fn(b), args.repeat)
            timings.append(t)
            outs.append(out)
        for o in outs[1:]:
            for a, c in zip(np.atleast_1d(outs[0]) if isinstance(outs[0], np.ndarray) else outs[0],
                            np.atleast_1d(o) if isinstance(o, np.ndarray) else o):
                np.testing.assert_allclose(a, c, rtol=1e-12)
        row = f"{name:<14}" + "".join(f"{t:>11.4f}s" for t in timings)
        if len(timings) > 1:
            row += f"{timings[0] / timings[1]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
