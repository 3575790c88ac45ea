"""Viewing geometry, disparity handling and block matching between views.

Disparity convention: a signed horizontal offset ``x_right - x_left`` in
pixels, so the block at ``x`` in the left view sits near ``x + d`` in the
right view.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hv3d import kernels

# Cone density (cells/mm^2) against eccentricity (mm): the 150k peak and the
# 6k value at 1.5 mm are the anchors, intermediate points trace the usual
# steep foveal falloff.
CONE_ECCENTRICITY_MM = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5)
CONE_DENSITY = (150000, 120000, 90000, 55000, 37000, 22000, 14000, 10000, 6000)

COMFORT_LIMIT_ARCMIN = 60.0


@dataclass(frozen=True)
class ViewingGeometry:
    """Display and viewer setup; lengths in mm, angles in degrees."""

    viewer_distance: float = 1830.0
    display_width: float = 1018.0
    display_height: float = 573.0
    horizontal_resolution: int = 1920
    vertical_resolution: int = 1080
    inter_ocular: float = 63.0
    acuity_half_angle: float = 0.44

    def __post_init__(self):
        for name in ("viewer_distance", "display_width", "display_height",
                     "horizontal_resolution", "vertical_resolution", "inter_ocular"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.acuity_half_angle <= 1.0:
            raise ValueError("acuity_half_angle must lie in (0, 1] degrees")

    @property
    def pixel_pitch(self) -> float:
        """Horizontal size of one pixel in mm."""
        return self.display_width / self.horizontal_resolution

    def pixels_to_arcmin(self, pixels):
        """Visual angle subtended by a horizontal pixel offset at the screen centre."""
        mm = np.abs(np.asarray(pixels, dtype=np.float64)) * self.pixel_pitch
        return np.degrees(2.0 * np.arctan(mm / (2.0 * self.viewer_distance))) * 60.0


@dataclass(frozen=True)
class BlockMatch:
    origin: tuple
    matched: tuple
    disparity: int
    cost: float


@dataclass(frozen=True)
class BlockMatches:
    """Vectorised matches for a whole block grid; corners are ``(y, x)``."""

    origins: np.ndarray
    matched: np.ndarray
    disparity: np.ndarray
    cost: np.ndarray

    def __len__(self):
        return len(self.origins)

    def __getitem__(self, i) -> BlockMatch:
        return BlockMatch(tuple(int(v) for v in self.origins[i]),
                          tuple(int(v) for v in self.matched[i]),
                          int(self.disparity[i]), float(self.cost[i]))


def block_disparity(dmap, origin, m: int) -> int:
    """Median disparity of the ``m x m`` block at ``origin`` (y, x).

    Even counts take the mean of the two central values; the result is
    truncated toward zero to whole pixels.
    """
    y, x = origin
    vals = np.asarray(dmap, dtype=np.float64)[y:y + m, x:x + m]
    if vals.shape != (m, m):
        raise ValueError("block extends outside the disparity map")
    return int(math.trunc(float(np.median(vals))))


def block_disparities(dmap, origins, m: int) -> np.ndarray:
    from hv3d.frame import gather_blocks

    blocks = gather_blocks(dmap, origins, m).reshape(len(origins), -1)
    return np.trunc(np.median(blocks, axis=1)).astype(np.intp)


def _approx_positions(origins, disp):
    centers = np.array(origins, dtype=np.intp, copy=True).reshape(-1, 2)
    centers[:, 1] += np.asarray(disp, dtype=np.intp)
    return centers


def match_blocks(base, other, dmap, origins, m: int, search: int,
                 mode: str = "full", backend=None) -> BlockMatches:
    """Match every block of ``base`` at ``origins`` into ``other``.

    ``full`` searches the ``search x search`` window centred on the
    disparity-shifted position (window clamped to the frame, first minimum
    in row-major order wins); ``fast`` takes the shifted position as is,
    clamped so the block stays inside the frame.
    """
    base = np.asarray(base, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    if search < m:
        raise ValueError("search size must be at least the block size")
    origins = np.asarray(origins, dtype=np.intp).reshape(-1, 2)
    disp = block_disparities(dmap, origins, m)
    centers = _approx_positions(origins, disp)
    h, w = other.shape
    if mode == "full":
        matched, cost = kernels.block_search(base, other, origins, centers, m, search, backend)
    elif mode == "fast":
        matched = np.column_stack([np.clip(centers[:, 0], 0, h - m),
                                   np.clip(centers[:, 1], 0, w - m)]).astype(np.intp)
        from hv3d.frame import gather_blocks

        diff = gather_blocks(base, origins, m) - gather_blocks(other, matched, m)
        cost = (diff * diff).sum(axis=(1, 2)) / (m * m)
    else:
        raise ValueError(f"unknown matching mode {mode!r}")
    return BlockMatches(origins, np.asarray(matched, dtype=np.intp), disp, np.asarray(cost))


def best_match(left, right, origin, d: int, m: int, search: int, mode: str = "full") -> BlockMatch:
    """Single-block form of :func:`match_blocks` with a given block disparity."""
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    dmap = np.full(left.shape, float(d))
    return match_blocks(left, right, dmap, [origin], m, search, mode)[0]


def disparity_to_depth(disparity, geo: ViewingGeometry):
    """Perceived depth in mm for a pixel disparity (scalar or array)."""
    d = np.asarray(disparity, dtype=np.float64)
    denom = 1.0 + d * geo.display_width / (geo.inter_ocular * geo.horizontal_resolution)
    if np.any(denom <= 0):
        raise ValueError("disparity beyond the divergence limit (non-positive denominator)")
    depth = geo.viewer_distance / denom
    return float(depth) if depth.ndim == 0 else depth


def depth_to_disparity(depth, geo: ViewingGeometry):
    z = np.asarray(depth, dtype=np.float64)
    d = (geo.viewer_distance / z - 1.0) * geo.inter_ocular * geo.horizontal_resolution / geo.display_width
    return float(d) if d.ndim == 0 else d


def fovea_block_length(geo: ViewingGeometry) -> int:
    """Side in pixels of the screen square imaged onto the fovea."""
    return int(round(2.0 * geo.viewer_distance * geo.vertical_resolution
                     * math.tan(math.radians(geo.acuity_half_angle)) / geo.display_height))


def fovea_radius(geo: ViewingGeometry) -> int:
    return int(round(geo.viewer_distance * math.tan(math.radians(geo.acuity_half_angle))
                     * geo.vertical_resolution / geo.display_height))


def fovea_profile(r):
    """Photoreceptor weight at normalised radius ``r`` (0 centre, 1 rim)."""
    ecc = np.asarray(r, dtype=np.float64) * CONE_ECCENTRICITY_MM[-1]
    dens = np.interp(ecc, CONE_ECCENTRICITY_MM, CONE_DENSITY)
    w = (dens - CONE_DENSITY[-1]) / (CONE_DENSITY[0] - CONE_DENSITY[-1])
    return np.where(np.asarray(r) <= 1.0, w, 0.0)


def fovea_kernel(geo: ViewingGeometry, radius: int | None = None) -> np.ndarray:
    """Square ``(2L+1)`` kernel: 1 at the centre, 0 on and beyond the rim."""
    if radius is None:
        radius = fovea_radius(geo)
    if radius < 1:
        return np.ones((1, 1))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    r = np.hypot(ax[:, None], ax[None, :]) / radius
    return fovea_profile(r)


def discomfort_weight(disparity_arcmin):
    """Comfort-zone penalty: 1 up to 60 arcmin, then a linear drop clamped at 0."""
    d = np.abs(np.asarray(disparity_arcmin, dtype=np.float64))
    w = np.where(d <= COMFORT_LIMIT_ARCMIN, 1.0, np.maximum(0.0, 1.36 - 0.006 * d))
    return float(w) if w.ndim == 0 else w
