"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Semantics match the compiled code: candidate order is row-major inside the
clamped search window and the first minimum wins. Results are bit-identical
for integer-valued planes; for arbitrary floats the SSD summation order
differs and near-ties may resolve differently.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def block_search(base, other, origins, centers, m, search):
    h, w = other.shape
    wh, ww = min(search, h), min(search, w)
    half = (search - m) // 2
    n = len(origins)
    matched = np.empty((n, 2), dtype=np.intp)
    costs = np.empty(n, dtype=np.float64)
    for b in range(n):
        by, bx = origins[b]
        wy0 = int(np.clip(centers[b, 0] - half, 0, h - wh))
        wx0 = int(np.clip(centers[b, 1] - half, 0, w - ww))
        window = other[wy0:wy0 + wh, wx0:wx0 + ww]
        cand = sliding_window_view(window, (m, m))
        block = base[by:by + m, bx:bx + m]
        ssd = ((cand - block) ** 2).sum(axis=(2, 3))
        k = int(np.argmin(ssd))
        iy, ix = divmod(k, ssd.shape[1])
        matched[b] = (wy0 + iy, wx0 + ix)
        costs[b] = ssd[iy, ix] / (m * m)
    return matched, costs


def _walk(profile, start, rising):
    """Return (lo, hi) indices of the monotone run through ``start``."""
    lo = hi = start
    if rising:
        while lo > 0 and profile[lo - 1] < profile[lo]:
            lo -= 1
        while hi < len(profile) - 1 and profile[hi + 1] > profile[hi]:
            hi += 1
    else:
        while lo > 0 and profile[lo - 1] > profile[lo]:
            lo -= 1
        while hi < len(profile) - 1 and profile[hi + 1] < profile[hi]:
            hi += 1
    return lo, hi


def edge_widths(img, edges, direction):
    out = np.zeros(img.shape, dtype=np.float64)
    for y, x in zip(*np.nonzero(edges)):
        s = int(direction[y, x])
        if s in (1, -1):
            lo, hi = _walk(img[y], x, s > 0)
        elif s in (2, -2):
            lo, hi = _walk(img[:, x], y, s > 0)
        else:
            continue
        out[y, x] = hi - lo
    return out
