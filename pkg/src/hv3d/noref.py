"""No-reference blur and blockiness metrics with saliency weighting.

None of these look at a reference frame. Saliency is optional; ``None``
means uniform weights. Stereo content is scored per view and averaged.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from hv3d import frame as fc
from hv3d import kernels

EDGE_THRESHOLD = 0.1  # fraction of the peak Sobel magnitude
BLOCK = 8


def _prepare(frame_, S, min_side=16):
    f = fc.as_plane(frame_, "frame")
    if min(f.shape) < min_side:
        raise ValueError(f"frame {f.shape[1]}x{f.shape[0]} is smaller than {min_side}x{min_side}")
    if S is None:
        return f, np.ones_like(f)
    from hv3d.pooling import _saliency

    return f, _saliency(S, f.shape)


def _ratio(num, den):
    return num / den if den > 0 else None


def nrpbm_blur_s(frame_, S=None) -> float:
    """Sharpness in [0, 1] from the loss of neighbour variation under a 3x3 re-blur.

    Per direction the blur ratio is ``sum(min(DF, DB) * S) / sum(DF * S)``,
    ``DF``/``DB`` being absolute neighbour differences of the frame and its
    re-blurred copy. The score is ``1 - max`` of the two ratios; directions
    without any variation are skipped and a constant frame scores 0.
    """
    f, s = _prepare(frame_, S)
    b = ndimage.uniform_filter(f, size=3, mode="nearest")
    ratios = []
    for axis in (0, 1):
        df = np.abs(np.diff(f, axis=axis))
        db = np.abs(np.diff(b, axis=axis))
        w = s[1:, :] if axis == 0 else s[:, 1:]
        r = _ratio(float((np.minimum(df, db) * w).sum()), float((df * w).sum()))
        if r is not None:
            ratios.append(r)
    if not ratios:
        return 0.0
    return float(1.0 - max(ratios))


def detect_edges(frame_, threshold: float = EDGE_THRESHOLD):
    """Thinned Sobel edges and their walking direction for :func:`kernels.edge_widths`.

    Returns ``(edges bool, direction int8)``; direction is +-1 along rows
    (dominant horizontal gradient, sign of the gradient) and +-2 along
    columns.
    """
    f = fc.as_plane(frame_, "frame")
    gx = ndimage.sobel(f, axis=1, mode="nearest")
    gy = ndimage.sobel(f, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return np.zeros(f.shape, dtype=bool), np.zeros(f.shape, dtype=np.int8)
    horiz = np.abs(gx) >= np.abs(gy)
    pad = np.pad(mag, 1, mode="constant")
    left, right = pad[1:-1, :-2], pad[1:-1, 2:]
    up, down = pad[:-2, 1:-1], pad[2:, 1:-1]
    is_max = np.where(horiz, (mag >= left) & (mag >= right), (mag >= up) & (mag >= down))
    edges = (mag >= threshold * peak) & is_max
    direction = np.where(horiz, np.where(gx >= 0, 1, -1), np.where(gy >= 0, 2, -2)).astype(np.int8)
    direction[~edges] = 0
    return edges, direction


def edge_width_map(frame_, threshold: float = EDGE_THRESHOLD, backend=None):
    """``(widths, edges)``: width in pixels of the monotone run through each edge pixel."""
    f = fc.as_plane(frame_, "frame")
    edges, direction = detect_edges(f, threshold)
    return kernels.edge_widths(f, edges, direction, backend), edges


def farias_blur_s(frame_, S=None, threshold: float = EDGE_THRESHOLD, backend=None) -> float:
    """Saliency-weighted mean edge width (pixels)."""
    f, s = _prepare(frame_, S, min_side=3)
    widths, edges = edge_width_map(f, threshold, backend)
    if not edges.any():
        raise ValueError("no edges found")
    w = s[edges]
    if not w.sum() > 0:
        raise ValueError("saliency is zero on every edge pixel")
    return float((widths[edges] * w).sum() / w.sum())


def farias_block_terms(frame_, S=None):
    """Saliency-weighted share of neighbour differences on 8x8 block borders.

    Returns ``(vertical, horizontal)``: differences across horizontal block
    borders over all vertical differences, and the column-wise counterpart.
    A direction with no variation contributes 0.
    """
    f, s = _prepare(frame_, S)
    terms = []
    for axis in (0, 1):
        d = np.abs(np.diff(f, axis=axis))
        w = s[1:, :] if axis == 0 else s[:, 1:]
        dw = d * w
        # diff index i spans pixels i and i + 1; a border sits before every multiple of 8
        border = (np.arange(d.shape[axis]) + 1) % BLOCK == 0
        num = float(dw.take(np.flatnonzero(border), axis=axis).sum())
        den = float(dw.sum())
        terms.append(num / den if den > 0 else 0.0)
    return terms[0], terms[1]


def farias_block_s(frame_, S=None, normalize: bool = True) -> float:
    """Sum of both border-difference shares, divided by ``H * W`` when ``normalize``."""
    f = fc.as_plane(frame_, "frame")
    v, h = farias_block_terms(f, S)
    raw = v + h
    return raw / f.size if normalize else raw


NR_METRICS = {
    "nrpbm": nrpbm_blur_s,
    "farias_blur": farias_blur_s,
    "farias_block": farias_block_s,
}


def nr_stereo(metric, left, right, S=None, **kw) -> float:
    """Average of a no-reference metric over both views (same saliency map)."""
    fn = NR_METRICS[metric] if isinstance(metric, str) else metric
    return 0.5 * (fn(left, S, **kw) + fn(right, S, **kw))


def nr_sequence(metric, frames, sal_seq=None, **kw) -> float:
    """Temporal mean of :func:`nr_stereo` over ``(left, right)`` frames."""
    frames = list(frames)
    if not frames:
        raise ValueError("empty sequence")
    sal_seq = [None] * len(frames) if sal_seq is None else list(sal_seq)
    if len(sal_seq) != len(frames):
        raise ValueError("saliency sequence length does not match the video")
    vals = []
    for fr, s in zip(frames, sal_seq):
        left, right = (fr.left, fr.right) if hasattr(fr, "left") else fr
        vals.append(nr_stereo(metric, left, right, s, **kw))
    return float(np.mean(vals))
