"""Saliency-weighted fidelity metrics.

A saliency map ``S`` becomes mean-1 weights ``S / mean(S)``, so every
spatial average turns into ``sum(v * S) / sum(S)`` and a uniform map gives
back the unweighted metric. One map per frame serves both views.

Plane-level functions are ``weighted_*``; the sequence-level ``*_s``
functions take aligned sequences of stereo pairs (``(left, right)`` tuples
or :class:`~hv3d.metric.StereoFrame`) plus one map per frame, average the
two views and then average over time.
"""
from __future__ import annotations

import numpy as np

from hv3d import frame as fc


def _saliency(S, shape=None) -> np.ndarray:
    s = np.asarray(S, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"saliency map must be 2D, got shape {s.shape}")
    if shape is not None and s.shape != tuple(shape):
        raise ValueError(f"saliency map shape {s.shape} does not match frame {tuple(shape)}")
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise ValueError("saliency values must be finite and non-negative")
    if not s.sum() > 0:
        raise ValueError("saliency map is all zero")
    return s


def normalize_saliency(S) -> np.ndarray:
    """Mean-1 weights ``S / mean(S)``."""
    s = _saliency(S)
    return s / s.mean()


def weighted_mean(values, S) -> float:
    """``sum(v * S) / sum(S)``."""
    v = np.asarray(values, dtype=np.float64)
    s = _saliency(S, v.shape)
    return float(np.mean(v * (s / s.mean())))


def saliency_pyramid(S, levels: int) -> list:
    """Per-scale maps built with the image pyramid's 2x2 mean decimation."""
    return fc.pyramid(_saliency(S), levels)


def block_saliency(S, origins, m: int) -> np.ndarray:
    """Mean saliency of each ``m x m`` block."""
    s = _saliency(S)
    w = fc.gather_blocks(s, origins, m).mean(axis=(1, 2))
    if not w.sum() > 0:
        raise ValueError("saliency is zero over every block")
    return w


def _crop_weights(S, size):
    """Saliency aligned with a 'valid' map of a ``size``-tap filter."""
    return fc.valid_crop(np.asarray(S, dtype=np.float64), size)


# -- plane level ----------------------------------------------------------

def weighted_mse(ref, dist, S) -> float:
    ref = fc.as_plane(ref, "ref")
    dist = fc.as_plane(dist, "dist")
    if ref.shape != dist.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {dist.shape}")
    return weighted_mean((ref - dist) ** 2, S)


def weighted_psnr(ref, dist, S, peak: float = 255.0) -> float:
    return fc.psnr_from_mse(weighted_mse(ref, dist, S), peak)


def weighted_ssim(ref, dist, S, peak: float = 255.0) -> float:
    ref = fc.as_plane(ref, "ref")
    smap, _ = fc.ssim_map(ref, dist, peak)
    _saliency(S, ref.shape)
    window = min(fc.SSIM_WINDOW, *ref.shape)
    return weighted_mean(smap, _crop_weights(S, window))


def weighted_msssim(ref, dist, pyramid, peak: float = 255.0, weights=fc.MSSSIM_WEIGHTS) -> float:
    """MS-SSIM with level ``i`` of ``pyramid`` weighting scale ``i``.

    A single 2D map is expanded with :func:`saliency_pyramid`.
    """
    maps, windows = fc.msssim_terms(ref, dist, peak, len(weights))
    if isinstance(pyramid, np.ndarray) and pyramid.ndim == 2:
        pyramid = saliency_pyramid(pyramid, len(weights))
    if len(pyramid) < len(maps):
        raise ValueError(f"saliency pyramid has {len(pyramid)} levels, need {len(maps)}")
    values = [weighted_mean(m, _crop_weights(pyramid[i], windows[i])) for i, m in enumerate(maps)]
    return fc.combine_msssim(values, weights)


def weighted_vif(ref, dist, pyramid, scales: int = fc.VIF_SCALES,
                 noise_var: float = fc.VIF_NOISE_VAR) -> float:
    """VIF with saliency multiplying both information sums at every scale."""
    ref = fc.as_plane(ref, "ref")
    dist = fc.as_plane(dist, "dist")
    if isinstance(pyramid, np.ndarray) and pyramid.ndim == 2:
        _saliency(pyramid, ref.shape)
        pyramid = saliency_pyramid(pyramid, scales)
    if len(pyramid) < scales:
        raise ValueError(f"saliency pyramid has {len(pyramid)} levels, need {scales}")
    nums, dens, windows = fc.vif_terms(ref, dist, scales, noise_var)
    num = den = 0.0
    for i in range(scales):
        w = normalize_saliency(_crop_weights(pyramid[i], windows[i]))
        if w.shape != nums[i].shape:
            raise ValueError(f"saliency level {i} does not match VIF scale {i + 1}")
        num += float((nums[i] * w).sum())
        den += float((dens[i] * w).sum())
    if den <= 0.0:
        return 1.0 if num <= 0.0 and np.array_equal(ref, dist) else 0.0
    return num / den


# -- sequence level ---------------------------------------------------------

def _pair(x):
    if hasattr(x, "left") and hasattr(x, "right"):
        return x.left, x.right
    left, right = x
    return left, right


def _over_sequence(fn, ref_seq, dist_seq, sal_seq):
    ref_seq, dist_seq, sal_seq = list(ref_seq), list(dist_seq), list(sal_seq)
    if not (len(ref_seq) == len(dist_seq) == len(sal_seq)):
        raise ValueError(
            f"sequence lengths differ: ref {len(ref_seq)}, dist {len(dist_seq)}, saliency {len(sal_seq)}")
    if not ref_seq:
        raise ValueError("empty sequence")
    per_frame = []
    for r, d, s in zip(ref_seq, dist_seq, sal_seq):
        (rl, rr), (dl, dr) = _pair(r), _pair(d)
        per_frame.append(0.5 * (fn(rl, dl, s) + fn(rr, dr, s)))
    return float(np.mean(per_frame))


def psnr_s(ref_seq, dist_seq, sal_seq, peak: float = 255.0) -> float:
    return _over_sequence(lambda r, d, s: weighted_psnr(r, d, s, peak), ref_seq, dist_seq, sal_seq)


def ssim_s(ref_seq, dist_seq, sal_seq, peak: float = 255.0) -> float:
    return _over_sequence(lambda r, d, s: weighted_ssim(r, d, s, peak), ref_seq, dist_seq, sal_seq)


def msssim_s(ref_seq, dist_seq, sal_seq, peak: float = 255.0) -> float:
    """``sal_seq`` holds per-frame maps or ready-made pyramids."""
    return _over_sequence(lambda r, d, s: weighted_msssim(r, d, s, peak), ref_seq, dist_seq, sal_seq)


def vif_s(ref_seq, dist_seq, sal_seq) -> float:
    return _over_sequence(weighted_vif, ref_seq, dist_seq, sal_seq)


def hv3d_s(ref_seq, dist_seq, sal_seq, params=None):
    """Saliency-weighted HV3D; returns the same :class:`SequenceScore` as HV3D."""
    from hv3d.metric import Hv3dParams, hv3d_sequence

    return hv3d_sequence(ref_seq, dist_seq, params or Hv3dParams(), saliency=sal_seq)
