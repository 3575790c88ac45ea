"""Luma planes, block tiling, DCT and the 2D fidelity primitives.

Planes are plain 2D ``float64`` arrays. Every metric takes a ``peak``
(nominal white level, ``2**bit_depth - 1``) instead of carrying bit depth
on the array.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.fft import dctn, idctn

PSNR_CAP_DB = 100.0
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
VIF_SCALES = 4
VIF_NOISE_VAR = 2.0
_MIN_COARSE_SIDE = 4


def peak_for(bit_depth: int) -> float:
    return float(2 ** bit_depth - 1)


def as_plane(x, name="plane") -> np.ndarray:
    """Validate a single-channel raster and return it as float64."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"{name} must be a non-empty 2D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite samples")
    return a


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def luma_extract(frame, layout: str = "auto") -> np.ndarray:
    """Return the luma plane of ``frame``.

    ``layout`` is one of ``"y"`` (single plane, passed through), ``"rgb"``
    (H x W x 3 interleaved, BT.601 weights), ``"yuv"`` (H x W x 3 with Y
    first, or a ``(Y, U, V)`` tuple of planes). ``"auto"`` picks ``"y"``
    for 2D input and ``"rgb"`` for 3-channel input.
    """
    if isinstance(frame, (tuple, list)):
        if layout not in ("auto", "yuv"):
            raise ValueError(f"unsupported layout {layout!r} for planar input")
        return as_plane(frame[0], "Y")
    a = np.asarray(frame, dtype=np.float64)
    if layout == "auto":
        layout = "y" if a.ndim == 2 else "rgb"
    if layout == "y":
        return as_plane(a)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"layout {layout!r} needs an H x W x 3 array, got {a.shape}")
    if layout == "rgb":
        return as_plane(0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2])
    if layout == "yuv":
        return as_plane(a[..., 0])
    raise ValueError(f"unsupported layout {layout!r}")


def dct2(block):
    """Orthonormal 2D DCT-II over the last two axes (stacks allowed)."""
    return dctn(np.asarray(block, dtype=np.float64), type=2, norm="ortho", axes=(-2, -1))


def idct2(coeffs):
    return idctn(np.asarray(coeffs, dtype=np.float64), type=2, norm="ortho", axes=(-2, -1))


@dataclass(frozen=True)
class BlockGrid:
    """Non-overlapping ``m x m`` tiling anchored at (0, 0)."""

    block_size: int
    cols: int
    rows: int

    @property
    def covered(self):
        """Covered extent as ``(width, height)``."""
        return self.cols * self.block_size, self.rows * self.block_size

    def __len__(self):
        return self.cols * self.rows

    def origins(self) -> np.ndarray:
        """Block corners as an ``(N, 2)`` array of ``(y, x)``, row-major."""
        m = self.block_size
        ys, xs = np.mgrid[0:self.rows * m:m, 0:self.cols * m:m]
        return np.column_stack([ys.ravel(), xs.ravel()]).astype(np.intp)

    def extract(self, plane, origins=None) -> np.ndarray:
        """Stack of blocks, shape ``(N, m, m)``, at ``origins`` (default: the grid)."""
        if origins is None:
            origins = self.origins()
        return gather_blocks(plane, origins, self.block_size)


def gather_blocks(plane, origins, m) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    origins = np.asarray(origins, dtype=np.intp).reshape(-1, 2)
    iy = origins[:, 0, None, None] + np.arange(m)[None, :, None]
    ix = origins[:, 1, None, None] + np.arange(m)[None, None, :]
    return plane[iy, ix]


def partition_blocks(plane, m: int) -> BlockGrid:
    """Tile ``plane`` with ``m x m`` blocks; right/bottom remainders are dropped."""
    plane = np.asarray(plane)
    if m < 2:
        raise ValueError("block size must be at least 2")
    h, w = plane.shape[:2]
    if h < m or w < m:
        raise ValueError(f"plane {w}x{h} is smaller than one {m}x{m} block")
    return BlockGrid(m, w // m, h // m)


# -- filtering helpers -----------------------------------------------------

def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalised 1D Gaussian taps (the 2D window is their outer product)."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def filter_valid(x, taps) -> np.ndarray:
    """Separable correlation over the last two axes, 'valid' region only."""
    x = np.asarray(x, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    n = len(taps)
    c = n // 2  # correlate1d centres the taps here
    h, w = x.shape[-2], x.shape[-1]
    if h < n or w < n:
        raise ValueError(f"plane {w}x{h} smaller than a {n}-tap window")
    y = ndimage.correlate1d(x, taps, axis=-2, mode="constant")[..., c:c + h - n + 1, :]
    return ndimage.correlate1d(y, taps, axis=-1, mode="constant")[..., c:c + w - n + 1]


def valid_crop(x, size: int) -> np.ndarray:
    """Crop ``x`` to the pixels a 'valid' filter of ``size`` taps is centred on."""
    lo = (size - 1) // 2
    hi = size - 1 - lo
    h, w = x.shape[-2], x.shape[-1]
    return x[..., lo:h - hi, lo:w - hi]


def downsample(x) -> np.ndarray:
    """2x2 mean then decimate; odd trailing rows/columns are dropped."""
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2] // 2 * 2, x.shape[-1] // 2 * 2
    x = x[..., :h, :w]
    return 0.25 * (x[..., 0::2, 0::2] + x[..., 1::2, 0::2] + x[..., 0::2, 1::2] + x[..., 1::2, 1::2])


def pyramid(x, levels: int) -> list:
    out = [np.asarray(x, dtype=np.float64)]
    for _ in range(levels - 1):
        out.append(downsample(out[-1]))
    return out


# -- SSIM family -----------------------------------------------------------

def _ssim_terms(ref, dist, peak, window):
    taps = gaussian_window(window, SSIM_SIGMA)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu1 = filter_valid(ref, taps)
    mu2 = filter_valid(dist, taps)
    s11 = filter_valid(ref * ref, taps) - mu1 * mu1
    s22 = filter_valid(dist * dist, taps) - mu2 * mu2
    s12 = filter_valid(ref * dist, taps) - mu1 * mu2
    lum = (2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1)
    cs = (2 * s12 + c2) / (s11 + s22 + c2)
    return lum, cs


def ssim_map(ref, dist, peak: float = 255.0, window: int = SSIM_WINDOW):
    """Local SSIM over the 'valid' region and its mean.

    The map has shape ``(H - w + 1, W - w + 1)`` for a ``w``-tap window; the
    window shrinks to the plane's smaller side when that is below ``w``.
    Inputs may be stacks ``(..., H, W)``; the mean is then over everything.
    """
    ref = np.asarray(ref, dtype=np.float64)
    dist = np.asarray(dist, dtype=np.float64)
    _same_shape(ref, dist)
    window = min(window, ref.shape[-2], ref.shape[-1])
    lum, cs = _ssim_terms(ref, dist, peak, window)
    m = lum * cs
    return m, float(m.mean())


def block_ssim(ref_blocks, dist_blocks, peak: float = 255.0) -> np.ndarray:
    """Mean SSIM per block for ``(N, m, m)`` stacks, window ``min(11, m)``."""
    m, _ = ssim_map(ref_blocks, dist_blocks, peak)
    return m.mean(axis=(-2, -1))


def ssim(ref, dist, peak: float = 255.0) -> float:
    return ssim_map(ref, dist, peak)[1]


def msssim_terms(ref, dist, peak=255.0, scales=len(MSSSIM_WEIGHTS)):
    """Per-scale maps: ``[cs_1, ..., cs_{M-1}, l_M * cs_M]`` and their window sizes."""
    ref = as_plane(ref, "ref")
    dist = as_plane(dist, "dist")
    _same_shape(ref, dist)
    side = min(ref.shape) >> (scales - 1)
    if side < _MIN_COARSE_SIDE:
        raise ValueError(
            f"plane {ref.shape[1]}x{ref.shape[0]} too small for {scales} scales "
            f"(coarsest side {side} < {_MIN_COARSE_SIDE})"
        )
    maps, windows = [], []
    r, d = ref, dist
    for s in range(scales):
        window = min(SSIM_WINDOW, r.shape[0], r.shape[1])
        lum, cs = _ssim_terms(r, d, peak, window)
        maps.append(lum * cs if s == scales - 1 else cs)
        windows.append(window)
        if s < scales - 1:
            r, d = downsample(r), downsample(d)
    return maps, windows


def combine_msssim(values, weights=MSSSIM_WEIGHTS) -> float:
    """Weighted product of per-scale means; negative means clip to 0."""
    out = 1.0
    for v, wgt in zip(values, weights):
        out *= max(float(v), 0.0) ** wgt
    return out


def ms_ssim(ref, dist, peak: float = 255.0, weights=MSSSIM_WEIGHTS) -> float:
    maps, _ = msssim_terms(ref, dist, peak, len(weights))
    return combine_msssim([m.mean() for m in maps], weights)


# -- PSNR ------------------------------------------------------------------

def mse(ref, dist) -> float:
    ref = as_plane(ref, "ref")
    dist = as_plane(dist, "dist")
    _same_shape(ref, dist)
    return float(np.mean((ref - dist) ** 2))


def psnr_from_mse(err: float, peak: float = 255.0, cap: float = PSNR_CAP_DB) -> float:
    if err <= 0.0:
        return cap
    return min(cap, 10.0 * np.log10(peak * peak / err))


def psnr(ref, dist, peak: float = 255.0, cap: float = PSNR_CAP_DB) -> float:
    """PSNR in dB; zero error returns ``cap``."""
    return psnr_from_mse(mse(ref, dist), peak, cap)


# -- VIF (pixel domain) ----------------------------------------------------

def vif_terms(ref, dist, scales: int = VIF_SCALES, noise_var: float = VIF_NOISE_VAR):
    """Per-scale information maps ``(num_maps, den_maps, window_sizes)``.

    Scale ``s`` (1-based) uses a Gaussian of ``2**(scales - s + 1) + 1`` taps
    with sigma ``taps / 5``; coarser scales are reached by :func:`downsample`.
    """
    ref = as_plane(ref, "ref")
    dist = as_plane(dist, "dist")
    _same_shape(ref, dist)
    eps = 1e-10
    nums, dens, windows = [], [], []
    r, d = ref, dist
    for s in range(1, scales + 1):
        n = 2 ** (scales - s + 1) + 1
        if s > 1:
            r, d = downsample(r), downsample(d)
        if min(r.shape) < n:
            raise ValueError(f"plane too small for VIF scale {s} ({r.shape} < {n} taps)")
        taps = gaussian_window(n, n / 5.0)
        mu1 = filter_valid(r, taps)
        mu2 = filter_valid(d, taps)
        s1 = filter_valid(r * r, taps) - mu1 * mu1
        s2 = filter_valid(d * d, taps) - mu2 * mu2
        s12 = filter_valid(r * d, taps) - mu1 * mu2
        s1 = np.maximum(s1, 0.0)
        s2 = np.maximum(s2, 0.0)

        g = s12 / (s1 + eps)
        sv = s2 - g * s12
        low1 = s1 < eps
        g[low1] = 0.0
        sv[low1] = s2[low1]
        s1[low1] = 0.0
        low2 = s2 < eps
        g[low2] = 0.0
        sv[low2] = 0.0
        neg = g < 0
        sv[neg] = s2[neg]
        g[neg] = 0.0
        sv = np.maximum(sv, eps)

        nums.append(np.log10(1.0 + g * g * s1 / (sv + noise_var)))
        dens.append(np.log10(1.0 + s1 / noise_var))
        windows.append(n)
    return nums, dens, windows


def vif(ref, dist, scales: int = VIF_SCALES, noise_var: float = VIF_NOISE_VAR) -> float:
    """Pixel-domain VIF; 1 for identical inputs, near 0 when nothing is shared."""
    nums, dens, _ = vif_terms(ref, dist, scales, noise_var)
    num = sum(float(n.sum()) for n in nums)
    den = sum(float(d.sum()) for d in dens)
    if den <= 0.0:
        # flat reference carries no information; identical flats count as perfect
        return 1.0 if num <= 0.0 and np.array_equal(ref, dist) else 0.0
    return num / den
