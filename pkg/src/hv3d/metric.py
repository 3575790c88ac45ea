"""HV3D full-reference stereoscopic quality metric.

A frame score combines three factors::

    hv3d = mean_ssim ** beta1 * vif(depth) ** beta2 * var_term ** beta3

``mean_ssim`` compares cyclopean blocks (matched left/right blocks fused in
the DCT domain and weighted by a CSF mask), ``vif(depth)`` is the fidelity
of the distorted depth map and ``var_term`` the mean normalised local depth
variance of the reference. Frame scores are pooled with an exponentially
weighted Minkowski sum that favours the last frames.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from hv3d import frame as fc
from hv3d.geometry import BlockMatches, ViewingGeometry, disparity_to_depth, match_blocks

# Luminance quantisation table (JPEG, ITU-T T.81 Annex K).
JPEG_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

FLAT_VARIANCE = 1e-12


@dataclass(frozen=True)
class Hv3dParams:
    block_size: int = 16
    search_size: int = 64
    beta1: float = 0.4
    beta2: float = 0.1
    beta3: float = 0.29
    p: float = 9.0
    tau: float = 100.0
    outer_block: int = 64
    geometry: ViewingGeometry = field(default_factory=ViewingGeometry)
    mode: str = "full"
    peak: float = 255.0

    def __post_init__(self):
        if self.block_size < 4:
            raise ValueError("block_size must be >= 4")
        if self.search_size < self.block_size:
            raise ValueError("search_size must be >= block_size")
        if min(self.beta1, self.beta2, self.beta3) < 0:
            raise ValueError("exponents must be non-negative")
        if self.p < 1 or not self.tau > 0:
            raise ValueError("pooling needs p >= 1 and tau > 0")
        if self.outer_block < self.block_size:
            raise ValueError("outer_block must be >= block_size")
        if self.mode not in ("full", "fast"):
            raise ValueError(f"unknown matching mode {self.mode!r}")

    @property
    def betas(self):
        return self.beta1, self.beta2, self.beta3

    @classmethod
    def from_dict(cls, d: dict) -> "Hv3dParams":
        d = dict(d)
        if "geometry" in d and isinstance(d["geometry"], dict):
            d["geometry"] = ViewingGeometry(**d["geometry"])
        if "betas" in d:
            d["beta1"], d["beta2"], d["beta3"] = d.pop("betas")
        known = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class StereoFrame:
    """One stereo frame: luma views, left-grid disparity and optional depths.

    ``disparity_right`` is the same quantity sampled on the right view's
    grid; when absent the left-grid map stands in for it. Depths (mm) are
    derived from disparity when not supplied.
    """

    left: np.ndarray
    right: np.ndarray
    disparity: Optional[np.ndarray] = None
    disparity_right: Optional[np.ndarray] = None
    depth_left: Optional[np.ndarray] = None
    depth_right: Optional[np.ndarray] = None

    def view(self, base: str, geo: ViewingGeometry):
        """``(base view, other view, base->other offset map, base depth)``."""
        if base == "left":
            dmap = self.disparity
            depth = self.depth_left
            img, other = self.left, self.right
        elif base == "right":
            dmap = self.disparity_right if self.disparity_right is not None else self.disparity
            depth = self.depth_right
            img, other = self.right, self.left
        else:
            raise ValueError(f"base must be 'left' or 'right', not {base!r}")
        if depth is None and dmap is not None:
            depth = disparity_to_depth(dmap, geo)
        offset = None
        if dmap is not None:
            offset = dmap if base == "left" else -np.asarray(dmap, dtype=np.float64)
        return img, other, offset, depth


@dataclass
class FrameScore:
    index: int
    base: str
    mean_ssim: float
    vif: float
    var_term: float
    q_cyclopean: float
    q_depth: float
    hv3d: float
    block_ssim: Optional[np.ndarray] = field(default=None, repr=False)
    block_variance: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def components(self):
        return self.mean_ssim, self.vif, self.var_term


@dataclass
class SequenceScore:
    pooled: float
    frames: list

    def components(self) -> np.ndarray:
        """Frame-averaged ``(mean_ssim, vif, var_term)`` for exponent calibration."""
        return np.mean([f.components for f in self.frames], axis=0)


# -- CSF mask --------------------------------------------------------------

def _cubic(t, a=-0.5):
    t = np.abs(t)
    return np.where(
        t <= 1, (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1,
        np.where(t < 2, a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a, 0.0),
    )


def _bicubic_matrix(n_in, n_out):
    """Interpolation weights ``(n_out, n_in)``, pixel-centre aligned, edges replicated."""
    x = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    base = np.floor(x).astype(int)
    mat = np.zeros((n_out, n_in))
    for off in range(-1, 3):
        idx = base + off
        w = _cubic(x - idx)
        np.add.at(mat, (np.arange(n_out), np.clip(idx, 0, n_in - 1)), w)
    return mat / mat.sum(axis=1, keepdims=True)


@lru_cache(maxsize=None)
def _csf_mask_cached(m: int) -> np.ndarray:
    mask = 1.0 / JPEG_LUMA_TABLE
    mask = mask / mask.mean()
    if m != 8:
        r = _bicubic_matrix(8, m)
        mask = r @ mask @ r.T
        mask = mask / mask.mean()
    if np.any(mask <= 0):
        raise ValueError(f"CSF mask resampled to {m} has non-positive weights")
    mask.setflags(write=False)
    return mask


def build_csf_mask(m: int) -> np.ndarray:
    """``m x m`` DCT weights inversely proportional to the JPEG luma table, mean 1."""
    if m < 4:
        raise ValueError("CSF mask needs m >= 4")
    return _csf_mask_cached(int(m))


# -- cyclopean component -----------------------------------------------------

def fuse_cyclopean_block(block_left, block_right, mask) -> np.ndarray:
    """Low-frequency depth slice of the 3D-DCT of ``{left, right}``, CSF-weighted.

    Accepts single blocks or ``(N, m, m)`` stacks.
    """
    bl = np.asarray(block_left, dtype=np.float64)
    br = np.asarray(block_right, dtype=np.float64)
    if bl.shape != br.shape or bl.shape[-2:] != np.shape(mask):
        raise ValueError("block and mask sizes must agree")
    low = (fc.dct2(bl) + fc.dct2(br)) / math.sqrt(2.0)
    return mask * low


def cyclopean_block_ssim(ref_base, ref_other, dist_base, dist_other,
                         matches: BlockMatches, mask, peak=255.0) -> np.ndarray:
    """SSIM of each reconstructed cyclopean block pair (reference matches reused)."""
    m = mask.shape[0]
    rl = fc.gather_blocks(ref_base, matches.origins, m)
    rr = fc.gather_blocks(ref_other, matches.matched, m)
    dl = fc.gather_blocks(dist_base, matches.origins, m)
    dr = fc.gather_blocks(dist_other, matches.matched, m)
    ref_c = fc.idct2(fuse_cyclopean_block(rl, rr, mask))
    dist_c = fc.idct2(fuse_cyclopean_block(dl, dr, mask))
    return fc.block_ssim(ref_c, dist_c, peak)


def q_cyclopean(ref_pair, dist_pair, matches: BlockMatches, mask, beta1: float,
                peak=255.0, weights=None) -> float:
    """Cyclopean quality: (weighted) mean block SSIM raised to ``beta1``."""
    s = cyclopean_block_ssim(ref_pair[0], ref_pair[1], dist_pair[0], dist_pair[1],
                             matches, mask, peak)
    mean = _weighted(s, weights)
    return max(mean, 0.0) ** beta1


# -- depth component ---------------------------------------------------------

def normalize_depth(depth) -> np.ndarray:
    d = np.asarray(depth, dtype=np.float64)
    mx = d.max()
    return d / mx if mx > 0 else np.zeros_like(d)


def _outer_span(start, m, k, n):
    if n <= k:
        return 0, n
    lo = start + m // 2 - k // 2
    lo = min(max(lo, 0), n - k)
    return lo, lo + k


def local_depth_variance(norm_depth, origin, m: int, k: int) -> float:
    """Sample variance of the ``k x k`` window centred on the block at ``origin``."""
    nd = np.asarray(norm_depth, dtype=np.float64)
    y0, y1 = _outer_span(origin[0], m, k, nd.shape[0])
    x0, x1 = _outer_span(origin[1], m, k, nd.shape[1])
    return float(np.var(nd[y0:y1, x0:x1], ddof=1))


def block_variances(norm_depth, origins, m: int, k: int) -> np.ndarray:
    """:func:`local_depth_variance` for every block, batched per block row."""
    nd = np.asarray(norm_depth, dtype=np.float64)
    h, w = nd.shape
    origins = np.asarray(origins, dtype=np.intp).reshape(-1, 2)
    out = np.empty(len(origins))
    kx = min(k, w)
    for y in np.unique(origins[:, 0]):
        rows = np.flatnonzero(origins[:, 0] == y)
        y0, y1 = _outer_span(int(y), m, k, h)
        band = nd[y0:y1]
        x0 = np.array([_outer_span(int(x), m, k, w)[0] for x in origins[rows, 1]])
        win = band[:, x0[:, None] + np.arange(kx)]  # (ky, nblocks, kx)
        out[rows] = np.var(win, axis=(0, 2), ddof=1)
    return out


def variance_term(variances, weights=None) -> float:
    """Mean of variances normalised by their maximum; 1 for flat depth."""
    v = np.asarray(variances, dtype=np.float64)
    mx = v.max()
    if mx < FLAT_VARIANCE:
        return 1.0
    if weights is None:
        return float(v.sum() / (len(v) * mx))
    w = np.asarray(weights, dtype=np.float64)
    return float((v * w).sum() / (w.sum() * mx))


def q_depth(ref_depth, dist_depth, k: int = 64, beta2: float = 0.1, beta3: float = 0.29,
            m: int = 16) -> float:
    """Depth quality ``vif(D, D') ** beta2 * var_term ** beta3`` on the ``m``-grid."""
    ref_depth = fc.as_plane(ref_depth, "reference depth")
    dist_depth = fc.as_plane(dist_depth, "distorted depth")
    if ref_depth.shape != dist_depth.shape:
        raise ValueError(f"dimension mismatch: {ref_depth.shape} vs {dist_depth.shape}")
    origins = fc.partition_blocks(ref_depth, m).origins()
    var = variance_term(block_variances(normalize_depth(ref_depth), origins, m, k))
    return fc.vif(ref_depth, dist_depth) ** beta2 * var ** beta3


def _weighted(values, weights):
    if weights is None:
        return float(np.mean(values))
    w = np.asarray(weights, dtype=np.float64)
    return float((values * w).sum() / w.sum())


# -- frame and sequence ------------------------------------------------------

def hv3d_frame(ref: StereoFrame, dist: StereoFrame, params: Hv3dParams = Hv3dParams(),
               base: str = "left", index: int = 0, saliency=None,
               keep_blocks: bool = False) -> FrameScore:
    """Score one stereo frame with ``base`` as the partitioned view.

    With ``saliency`` (a non-negative map on the frame grid) block SSIMs and
    block variances are weighted by block-mean saliency and the depth VIF
    becomes its saliency-weighted form.
    """
    geo = params.geometry
    m = params.block_size
    ref_base, ref_other, offset, ref_depth = ref.view(base, geo)
    dist_base, dist_other, _, dist_depth = dist.view(base, geo)
    if offset is None:
        raise ValueError("reference disparity is required")
    if ref_depth is None or dist_depth is None:
        raise ValueError("reference and distorted depth (or disparity) are required")
    ref_base = fc.as_plane(ref_base, "reference base view")
    for name, arr in (("reference other view", ref_other), ("distorted base view", dist_base),
                      ("distorted other view", dist_other), ("disparity", offset),
                      ("reference depth", ref_depth), ("distorted depth", dist_depth)):
        if np.shape(arr) != ref_base.shape:
            raise ValueError(f"{name} shape {np.shape(arr)} does not match {ref_base.shape}")

    grid = fc.partition_blocks(ref_base, m)
    origins = grid.origins()
    matches = match_blocks(ref_base, ref_other, offset, origins, m, params.search_size, params.mode)
    mask = build_csf_mask(m)
    ssims = cyclopean_block_ssim(ref_base, ref_other, dist_base, dist_other, matches, mask, params.peak)

    weights = None
    if saliency is not None:
        from hv3d.pooling import block_saliency, weighted_vif

        weights = block_saliency(saliency, origins, m)
        vif_val = weighted_vif(ref_depth, dist_depth, saliency)
    else:
        vif_val = fc.vif(ref_depth, dist_depth)
    variances = block_variances(normalize_depth(ref_depth), origins, m, params.outer_block)
    var_t = variance_term(variances, weights)
    mean_ssim = _weighted(ssims, weights)

    q_cyc = max(mean_ssim, 0.0) ** params.beta1
    q_dep = max(vif_val, 0.0) ** params.beta2 * var_t ** params.beta3
    return FrameScore(index, base, mean_ssim, vif_val, var_t, q_cyc, q_dep, q_cyc * q_dep,
                      ssims if keep_blocks else None, variances if keep_blocks else None)


def minkowski_pool(scores: Sequence[float], p: float = 9.0, tau: float = 100.0) -> float:
    """Recency-weighted Minkowski mean; frame ``i`` (1-based) weighs ``exp((i - N) / tau)``."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot pool an empty score list")
    if np.any(s < 0):
        raise ValueError("scores must be non-negative")
    n = s.size
    w = np.exp((np.arange(1, n + 1) - n) / tau)
    return float(np.mean(s ** p * w) ** (1.0 / p))


def base_view_for(index: int) -> str:
    return "left" if index % 2 == 0 else "right"


def hv3d_sequence(ref_frames: Iterable[StereoFrame], dist_frames: Iterable[StereoFrame],
                  params: Hv3dParams = Hv3dParams(), saliency: Optional[Iterable] = None,
                  alternate: bool = True) -> SequenceScore:
    """Score aligned sequences; the base view flips between left and right every frame."""
    scores = []
    sal_iter = iter(saliency) if saliency is not None else None
    ref_iter, dist_iter = iter(ref_frames), iter(dist_frames)
    i = 0
    while True:
        r = next(ref_iter, None)
        d = next(dist_iter, None)
        if r is None and d is None:
            break
        if r is None or d is None:
            raise ValueError("reference and distorted sequences differ in length")
        s = None
        if sal_iter is not None:
            s = next(sal_iter, None)
            if s is None:
                raise ValueError("saliency sequence shorter than the video")
        base = base_view_for(i) if alternate else "left"
        scores.append(hv3d_frame(r, d, params, base, i, s))
        i += 1
    if not scores:
        raise ValueError("empty sequence")
    pooled = minkowski_pool([f.hv3d for f in scores], params.p, params.tau)
    return SequenceScore(pooled, scores)


# -- exponent calibration ----------------------------------------------------

DEFAULT_GRID = {"beta1": (0.01, 1.0, 0.01), "beta2": (0.01, 1.0, 0.01), "beta3": (0.01, 1.0, 0.01)}


def grid_axis(start: float, stop: float, step: float) -> np.ndarray:
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 10)


@dataclass
class Calibration:
    betas: tuple
    pcc: float


def calibrate_exponents(components, mos, grid: Optional[dict] = None) -> Calibration:
    """Grid search for the exponents maximising PCC(HV3D, MOS).

    ``components`` is ``(n_clips, 3)``: mean cyclopean SSIM, depth VIF and
    variance term. Ties keep the lexicographically smallest triple.
    """
    comp = np.asarray(components, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if comp.ndim != 2 or comp.shape[1] != 3 or len(comp) != len(y):
        raise ValueError("components must be (n_clips, 3) matching the MOS vector")
    if len(y) < 3:
        raise ValueError("need at least 3 clips")
    if np.ptp(y) == 0:
        raise ValueError("constant MOS: correlation undefined")
    grid = {**DEFAULT_GRID, **(grid or {})}
    b1, b2, b3 = (grid_axis(*grid[k]) for k in ("beta1", "beta2", "beta3"))

    with np.errstate(divide="ignore"):
        logs = np.log(np.maximum(comp, 0.0))
    yc = y - y.mean()
    yn = np.sqrt((yc * yc).sum())
    tail = (b2[:, None, None] * logs[None, None, :, 1]
            + b3[None, :, None] * logs[None, None, :, 2]).reshape(-1, len(y))
    pairs = np.stack(np.meshgrid(b2, b3, indexing="ij"), axis=-1).reshape(-1, 2)

    best, best_betas = -np.inf, None
    for beta1 in b1:
        with np.errstate(invalid="ignore"):
            x = np.exp(beta1 * logs[:, 0] + tail)
            xc = x - x.mean(axis=1, keepdims=True)
            r = (xc @ yc) / (np.sqrt((xc * xc).sum(axis=1)) * yn)
        r = np.where(np.isfinite(r), r, -np.inf)
        j = int(np.argmax(r))
        if r[j] > best:
            best = float(r[j])
            best_betas = (float(beta1), float(pairs[j, 0]), float(pairs[j, 1]))
    if best_betas is None:
        raise ValueError("no grid point gives a defined correlation")
    return Calibration(best_betas, best)
