# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: exhaustive block search and edge-width walks.

Both functions mirror :mod:`hv3d._fallback` exactly, including tie order.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _clamp(Py_ssize_t v, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def block_search(const double[:, ::1] base, const double[:, ::1] other,
                 const Py_ssize_t[:, ::1] origins, const Py_ssize_t[:, ::1] centers,
                 Py_ssize_t m, Py_ssize_t search):
    """Full-search SSD block matching.

    ``origins`` are (y, x) corners of the base-view blocks, ``centers`` the
    approximate (y, x) corners in ``other``. Returns (matched corners, MSE).
    """
    cdef Py_ssize_t n = origins.shape[0]
    cdef Py_ssize_t h = other.shape[0], w = other.shape[1]
    cdef Py_ssize_t wh = search if search < h else h
    cdef Py_ssize_t ww = search if search < w else w
    cdef Py_ssize_t half = (search - m) // 2
    cdef Py_ssize_t b, by, bx, wy0, wx0, cy, cx, i, j, best_y, best_x
    cdef double best, acc, d
    cdef const double* brow
    cdef const double* orow

    matched = np.empty((n, 2), dtype=np.intp)
    costs = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t[:, ::1] mv = matched
    cdef double[::1] cv = costs

    with nogil:
        for b in range(n):
            by = origins[b, 0]
            bx = origins[b, 1]
            wy0 = _clamp(centers[b, 0] - half, 0, h - wh)
            wx0 = _clamp(centers[b, 1] - half, 0, w - ww)
            best = 1e300
            best_y = wy0
            best_x = wx0
            for cy in range(wy0, wy0 + wh - m + 1):
                for cx in range(wx0, wx0 + ww - m + 1):
                    acc = 0.0
                    for i in range(m):
                        brow = &base[by + i, bx]
                        orow = &other[cy + i, cx]
                        for j in range(m):
                            d = brow[j] - orow[j]
                            acc = acc + d * d
                        if acc >= best:
                            break
                    if acc < best:
                        best = acc
                        best_y = cy
                        best_x = cx
            mv[b, 0] = best_y
            mv[b, 1] = best_x
            cv[b] = best / (m * m)
    return matched, costs


def edge_widths(const double[:, ::1] img, const unsigned char[:, ::1] edges,
                const signed char[:, ::1] direction):
    """Distance between the local extrema bracketing each edge pixel.

    ``direction`` is +1/-1 for a rising/falling profile along the row and
    +2/-2 along the column; 0 marks non-edge pixels.
    """
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t y, x, lo, hi
    cdef signed char s
    out = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] ov = out

    with nogil:
        for y in range(h):
            for x in range(w):
                if not edges[y, x]:
                    continue
                s = direction[y, x]
                if s == 1:
                    lo = x
                    while lo > 0 and img[y, lo - 1] < img[y, lo]:
                        lo -= 1
                    hi = x
                    while hi < w - 1 and img[y, hi + 1] > img[y, hi]:
                        hi += 1
                elif s == -1:
                    lo = x
                    while lo > 0 and img[y, lo - 1] > img[y, lo]:
                        lo -= 1
                    hi = x
                    while hi < w - 1 and img[y, hi + 1] < img[y, hi]:
                        hi += 1
                elif s == 2:
                    lo = y
                    while lo > 0 and img[lo - 1, x] < img[lo, x]:
                        lo -= 1
                    hi = y
                    while hi < h - 1 and img[hi + 1, x] > img[hi, x]:
                        hi += 1
                elif s == -2:
                    lo = y
                    while lo > 0 and img[lo - 1, x] > img[lo, x]:
                        lo -= 1
                    hi = y
                    while hi < h - 1 and img[hi + 1, x] < img[hi, x]:
                        hi += 1
                else:
                    continue
                ov[y, x] = hi - lo
    return out
