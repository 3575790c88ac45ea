"""Synthetic stereo clips: textured background plane, a moving foreground
object, consistent disparity, saliency and gaze. Used by the tests, the
benchmark and the CLI ``synth`` command.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from hv3d import io as hio
from hv3d.metric import StereoFrame

DISP_SCALE = 100.0
DISP_OFFSET = 32768.0  # 16-bit PGM sample s holds (s - 32768) / 100 px
PAN_PX = 2


def _texture(rng, h, w, sigma=1.2):
    t = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma, mode="wrap")
    t = (t - t.min()) / (t.max() - t.min())
    return 16.0 + 219.0 * t


@dataclass
class SceneState:
    height: int
    width: int
    frames: int
    background: np.ndarray
    foreground: np.ndarray
    obj_radius: float
    disp_top: float = -4.0
    disp_bottom: float = 2.0
    disp_object: float = 9.0

    def object_center(self, t):
        """``(y, x)`` of the foreground object at frame ``t``."""
        phase = 2 * np.pi * t / max(self.frames, 1)
        return (self.height * (0.5 + 0.15 * np.sin(phase)),
                self.width * (0.35 + 0.3 * t / max(self.frames - 1, 1)))


def make_scene(width: int, height: int, frames: int, seed: int = 0) -> SceneState:
    rng = np.random.default_rng(seed)
    bg = _texture(rng, height, width + PAN_PX * frames + 32)
    fg = _texture(rng, height, width, sigma=2.0)
    if seed == 0:
        layout = (0.18, -4.0, 2.0, 9.0)
    else:
        layout = (rng.uniform(0.1, 0.3), rng.uniform(-8.0, 0.0), rng.uniform(0.0, 6.0), rng.uniform(4.0, 14.0))
    radius, top, bottom, obj = layout
    return SceneState(height, width, frames, bg, fg, radius * min(height, width), top, bottom, obj)


def render(scene: SceneState, t: int):
    """``(left, right, disparity, object mask)`` for frame ``t``; disparity is ``x_R - x_L``."""
    h, w = scene.height, scene.width
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = scene.object_center(t)
    mask = ((yy - cy) / scene.obj_radius) ** 2 + ((xx - cx) / (1.3 * scene.obj_radius)) ** 2 <= 1.0
    disp = scene.disp_top + (scene.disp_bottom - scene.disp_top) * yy / max(h - 1, 1)
    disp = np.where(mask, scene.disp_object, disp)
    off = PAN_PX * t + 16
    left = np.where(mask, scene.foreground, scene.background[:, off:off + w])
    # right view sampled so that right(x + d) = left(x)
    src = np.clip(np.rint(xx - disp).astype(int), 0, w - 1)
    right = left[yy, src]
    return np.rint(left), np.rint(right), np.round(disp, 1), mask


def distort(img, kind: str, strength: float, rng) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if kind == "none" or strength == 0:
        out = img
    elif kind == "noise":
        out = img + rng.normal(0.0, strength, img.shape)
    elif kind == "blur":
        out = ndimage.gaussian_filter(img, strength, mode="nearest")
    elif kind == "blocky":
        h, w = img.shape
        hb, wb = h // 8 * 8, w // 8 * 8
        means = img[:hb, :wb].reshape(hb // 8, 8, wb // 8, 8).mean(axis=(1, 3))
        coarse = np.kron(means, np.ones((8, 8)))
        out = img.copy()
        a = min(strength, 1.0)
        out[:hb, :wb] = a * coarse + (1 - a) * img[:hb, :wb]
    else:
        raise ValueError(f"unknown distortion {kind!r}")
    return np.clip(np.rint(out), 0, 255)


def distort_disparity(disp, strength: float) -> np.ndarray:
    if strength == 0:
        return disp
    return np.round(ndimage.gaussian_filter(disp, 1.0 + strength, mode="nearest"), 1)


def saliency_map(scene: SceneState, t: int) -> np.ndarray:
    h, w = scene.height, scene.width
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = scene.object_center(t)
    r = scene.obj_radius
    obj = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * (0.8 * r) ** 2))
    centre = np.exp(-((yy - h / 2) ** 2 + (xx - w / 2) ** 2) / (2 * (0.4 * min(h, w)) ** 2))
    return 0.8 * obj + 0.2 * centre


def gaze_records(scene: SceneState, subjects: int, seed: int):
    """Rows ``(timestamp_ms, subject, frame, x, y)``, two samples per frame per subject."""
    rng = np.random.default_rng(seed)
    rows = []
    jitter = 0.4 * scene.obj_radius
    for s in range(subjects):
        for t in range(scene.frames):
            cy, cx = scene.object_center(t)
            for k in range(2):
                if rng.uniform() < 0.8:
                    x, y = cx + rng.normal(0, jitter), cy + rng.normal(0, jitter)
                else:
                    x, y = rng.uniform(0, scene.width - 1), rng.uniform(0, scene.height - 1)
                rows.append((t * 40.0 + 20.0 * k + 0.5 * s, f"s{s:02d}", t, round(x, 2), round(y, 2)))
    return rows


def stereo_clip(width=96, height=64, frames=4, seed=0, kind="noise", strength=8.0,
                disparity_strength=1.0):
    """In-memory ``(reference frames, distorted frames, saliency maps)``."""
    scene = make_scene(width, height, frames, seed)
    rng = np.random.default_rng(seed + 1)
    ref, dist, sal = [], [], []
    for t in range(frames):
        left, right, disp, _ = render(scene, t)
        ref.append(StereoFrame(left, right, disp))
        dist.append(StereoFrame(distort(left, kind, strength, rng), distort(right, kind, strength, rng),
                                distort_disparity(disp, disparity_strength)))
        sal.append(saliency_map(scene, t))
    return ref, dist, sal


DEFAULT_DISTORTIONS = (("noise", 6.0, 0.5), ("blur", 1.5, 1.0), ("blocky", 0.7, 2.0))


def write_dataset(out_dir, width=1920, height=1080, frames=30, seed=0,
                  distortions=DEFAULT_DISTORTIONS, subjects=8) -> Path:
    """Write one reference and one distorted clip per entry of ``distortions``.

    Views are raw YUV 4:2:0, disparity 16-bit and saliency 8-bit PGM sequences.
    Returns the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = make_scene(width, height, frames, seed)
    yuv = {"type": "yuv420", "width": width, "height": height, "frames": frames}
    disp_pgm = {"type": "pgm", "frames": frames, "scale": DISP_SCALE, "offset": DISP_OFFSET}

    rngs = [np.random.default_rng(seed + 100 + i) for i in range(len(distortions))]
    for t in range(frames):
        left, right, disp, _ = render(scene, t)
        append = t > 0
        hio.write_yuv420(out / "ref_left.yuv", [left], append=append)
        hio.write_yuv420(out / "ref_right.yuv", [right], append=append)
        hio.write_pgm(out / f"ref_disp_{t:03d}.pgm", disp * DISP_SCALE + DISP_OFFSET, 65535)
        hio.write_pgm(out / f"sal_{t:03d}.pgm", 255 * saliency_map(scene, t), 255)
        for i, (kind, strength, dstrength) in enumerate(distortions):
            hio.write_yuv420(out / f"d{i}_left.yuv", [distort(left, kind, strength, rngs[i])], append=append)
            hio.write_yuv420(out / f"d{i}_right.yuv", [distort(right, kind, strength, rngs[i])], append=append)
            dd = distort_disparity(disp, dstrength)
            hio.write_pgm(out / f"d{i}_disp_{t:03d}.pgm", dd * DISP_SCALE + DISP_OFFSET, 65535)

    rows = gaze_records(scene, subjects, seed)
    with open(out / "gaze.csv", "w") as fh:
        fh.write(",".join(("timestamp_ms", "subject_id", "frame_index", "x", "y")) + "\n")
        for r in rows:
            fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]},{r[4]}\n")

    clips = []
    for i, (kind, strength, _) in enumerate(distortions):
        clips.append({
            "name": f"{kind}{i}",
            "reference": {"left": {**yuv, "path": "ref_left.yuv"},
                          "right": {**yuv, "path": "ref_right.yuv"},
                          "disparity": {**disp_pgm, "pattern": "ref_disp_{:03d}.pgm"}},
            "distorted": {"left": {**yuv, "path": f"d{i}_left.yuv"},
                          "right": {**yuv, "path": f"d{i}_right.yuv"},
                          "disparity": {**disp_pgm, "pattern": f"d{i}_disp_{{:03d}}.pgm"}},
            "saliency": {"type": "pgm", "frames": frames, "pattern": "sal_{:03d}.pgm"},
            "gaze": "gaze.csv",
            "mos": round(4.5 - 0.9 * i, 2),
        })
    path = out / "manifest.json"
    path.write_text(json.dumps({"clips": clips}, indent=2) + "\n")
    return path
