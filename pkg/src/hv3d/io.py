"""Raster IO (PGM, raw YUV420, raw float32) and the dataset manifest.

Frame sources are small dicts::

    {"type": "yuv420", "path": "a.yuv", "width": 64, "height": 32, "frames": 3}
    {"type": "pgm", "pattern": "left_{:03d}.pgm", "frames": 30, "start": 0}
    {"type": "f32", "path": "d.f32", "width": 64, "height": 32, "frames": 3}

Disparity sources add ``offset`` and ``scale`` (value = (sample - offset)
/ scale). Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

SOURCE_TYPES = ("yuv420", "pgm", "f32")


# -- PGM -------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, pos: int):
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        out.append(data[start:pos])
    return out, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) PGM; 16-bit samples are big-endian."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"{path}: not a PGM file")
    (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad maxval {maxval}")
    if magic == b"P5":
        pos += 1  # single whitespace before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        raster = data[pos:pos + need]
        if len(raster) < need:
            raise ValueError(f"{path}: truncated raster ({len(raster)} of {need} bytes)")
        img = np.frombuffer(raster, dtype=dtype).reshape(h, w)
    else:
        vals, _ = _pgm_tokens(data, w * h, pos) if w * h else ([], pos)
        img = np.array([int(v) for v in vals], dtype=np.int64).reshape(h, w)
    return img.astype(np.float64)


def write_pgm(path, img, maxval: Optional[int] = None, binary: bool = True):
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError("PGM holds a single 2D plane")
    if maxval is None:
        maxval = 255 if a.max(initial=0) <= 255 else 65535
    q = np.clip(np.rint(a), 0, maxval).astype(np.int64)
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode())
        if binary:
            fh.write(q.astype(">u2" if maxval > 255 else "u1").tobytes())
        else:
            fh.write("\n".join(" ".join(map(str, row)) for row in q).encode() + b"\n")


# -- raw streams -----------------------------------------------------------

def _frame_bytes(kind, width, height, bit_depth=8):
    if kind == "yuv420":
        sample = 2 if bit_depth > 8 else 1
        return sample * (width * height + 2 * ((width + 1) // 2) * ((height + 1) // 2))
    return 4 * width * height


def _check_length(path, size, per_frame, frames):
    if frames is None:
        if size % per_frame:
            raise ValueError(f"{path}: size {size} is not a whole number of {per_frame}-byte frames")
        return size // per_frame
    need = frames * per_frame
    if size < need:
        raise ValueError(f"{path}: truncated at frame {size // per_frame} "
                         f"({size} bytes, {need} expected for {frames} frames)")
    if size > need:
        raise ValueError(f"{path}: size mismatch ({size} bytes, {need} expected for {frames} frames)")
    return frames


def read_yuv420(path, width: int, height: int, frames: Optional[int] = None,
                bit_depth: int = 8, indices=None) -> Iterator[np.ndarray]:
    """Yield Y planes of a planar 4:2:0 file; length is validated up front."""
    per = _frame_bytes("yuv420", width, height, bit_depth)
    n = _check_length(path, os.path.getsize(path), per, frames)
    dtype = np.dtype("<u2") if bit_depth > 8 else np.dtype("u1")
    y_bytes = width * height * dtype.itemsize
    with open(path, "rb") as fh:
        for i in (range(n) if indices is None else indices):
            if not 0 <= i < n:
                raise IndexError(f"{path}: frame {i} out of range (0..{n - 1})")
            fh.seek(i * per)
            buf = fh.read(y_bytes)
            if len(buf) < y_bytes:
                raise ValueError(f"{path}: truncated at frame {i}")
            yield np.frombuffer(buf, dtype=dtype).reshape(height, width).astype(np.float64)


def write_yuv420(path, frames, bit_depth: int = 8, append: bool = False):
    """Write luma planes with mid-grey chroma."""
    mid = 1 << (bit_depth - 1)
    dtype = "<u2" if bit_depth > 8 else "u1"
    with open(path, "ab" if append else "wb") as fh:
        for y in frames:
            y = np.asarray(y)
            h, w = y.shape
            fh.write(np.clip(np.rint(y), 0, (1 << bit_depth) - 1).astype(dtype).tobytes())
            fh.write(np.full(2 * ((w + 1) // 2) * ((h + 1) // 2), mid, dtype=dtype).tobytes())


def read_f32(path, width: int, height: int, frames: Optional[int] = None, indices=None):
    per = _frame_bytes("f32", width, height)
    n = _check_length(path, os.path.getsize(path), per, frames)
    with open(path, "rb") as fh:
        for i in (range(n) if indices is None else indices):
            if not 0 <= i < n:
                raise IndexError(f"{path}: frame {i} out of range (0..{n - 1})")
            fh.seek(i * per)
            yield np.frombuffer(fh.read(per), dtype="<f4").reshape(height, width).astype(np.float64)


def write_f32(path, frames, append: bool = False):
    with open(path, "ab" if append else "wb") as fh:
        for f in frames:
            fh.write(np.asarray(f, dtype="<f4").tobytes())


# -- sources ---------------------------------------------------------------

def _resolve(base_dir, p):
    p = Path(p)
    return p if p.is_absolute() or base_dir is None else Path(base_dir) / p


def source_frame_count(spec: dict, base_dir=None) -> int:
    kind = spec.get("type")
    if kind == "pgm":
        if "frames" in spec:
            return int(spec["frames"])
        start, n = int(spec.get("start", 0)), 0
        while _resolve(base_dir, spec["pattern"].format(start + n)).exists():
            n += 1
        return n
    if kind in ("yuv420", "f32"):
        path = _resolve(base_dir, spec["path"])
        if not path.exists():
            raise FileNotFoundError(f"missing file {path}")
        per = _frame_bytes(kind, spec["width"], spec["height"], spec.get("bit_depth", 8))
        return _check_length(path, path.stat().st_size, per, spec.get("frames"))
    raise ValueError(f"unknown source type {kind!r}")


def load_sequence(spec: dict, base_dir=None, indices=None) -> Iterator[np.ndarray]:
    """Yield luma (or value) planes of a source, optionally only ``indices``.

    ``offset``/``scale`` keys, when present, map samples to
    ``(sample - offset) / scale``.
    """
    kind = spec.get("type")
    if kind not in SOURCE_TYPES:
        raise ValueError(f"unknown source type {kind!r}; expected one of {SOURCE_TYPES}")
    scale = float(spec.get("scale", 1.0))
    offset = float(spec.get("offset", 0.0))
    if scale == 0:
        raise ValueError("source scale must be non-zero")
    if kind == "pgm":
        n = source_frame_count(spec, base_dir)
        start = int(spec.get("start", 0))
        it = []
        for i in (range(n) if indices is None else indices):
            it.append(_resolve(base_dir, spec["pattern"].format(start + i)))

        def gen():
            for p in it:
                if not p.exists():
                    raise FileNotFoundError(f"missing file {p}")
                yield read_pgm(p)
        frames = gen()
    else:
        path = _resolve(base_dir, spec["path"])
        if not path.exists():
            raise FileNotFoundError(f"missing file {path}")
        if kind == "yuv420":
            frames = read_yuv420(path, spec["width"], spec["height"], spec.get("frames"),
                                 spec.get("bit_depth", 8), indices)
        else:
            frames = read_f32(path, spec["width"], spec["height"], spec.get("frames"), indices)
    if scale == 1.0 and offset == 0.0:
        return frames
    return ((f - offset) / scale for f in frames)


# -- manifest --------------------------------------------------------------

VIEW_KEYS = ("left", "right", "disparity", "disparity_right", "depth_left", "depth_right")


@dataclass
class ClipSpec:
    name: str
    reference: dict
    distorted: dict
    saliency: Optional[dict] = None
    gaze: Optional[str] = None
    mos: Optional[float] = None
    subject_scores: Optional[list] = None
    base_dir: Optional[str] = None
    bit_depth: int = 8

    @property
    def peak(self) -> float:
        return float(2 ** self.bit_depth - 1)

    def sources(self):
        """``{label: spec}`` for every declared frame source."""
        out = {}
        for side in ("reference", "distorted"):
            for k, v in getattr(self, side).items():
                if k in VIEW_KEYS:
                    out[f"{side}.{k}"] = v
        if self.saliency is not None:
            out["saliency"] = self.saliency
        return out

    def frame_count(self) -> int:
        counts = {k: source_frame_count(v, self.base_dir) for k, v in self.sources().items()}
        if len(set(counts.values())) != 1:
            raise ValueError(f"clip {self.name}: frame counts disagree {counts}")
        return next(iter(counts.values()))

    def check_files(self):
        for label, spec in self.sources().items():
            if spec["type"] == "pgm":
                n = source_frame_count(spec, self.base_dir)
                start = int(spec.get("start", 0))
                for i in range(n):
                    p = _resolve(self.base_dir, spec["pattern"].format(start + i))
                    if not p.exists():
                        raise FileNotFoundError(f"clip {self.name}: {label} missing {p}")
            else:
                p = _resolve(self.base_dir, spec["path"])
                if not p.exists():
                    raise FileNotFoundError(f"clip {self.name}: {label} missing {p}")
        if self.gaze is not None and not _resolve(self.base_dir, self.gaze).exists():
            raise FileNotFoundError(f"clip {self.name}: gaze log missing")
        self.frame_count()

    def stream(self, side: str, key: str, indices=None):
        spec = getattr(self, side).get(key)
        if spec is None:
            return None
        return load_sequence(spec, self.base_dir, indices)

    def gaze_path(self):
        return None if self.gaze is None else _resolve(self.base_dir, self.gaze)


@dataclass
class Manifest:
    clips: list = field(default_factory=list)
    base_dir: Optional[str] = None

    def clip(self, name: Optional[str] = None) -> ClipSpec:
        if name is None:
            if len(self.clips) != 1:
                raise ValueError("manifest has several clips; pick one by name")
            return self.clips[0]
        for c in self.clips:
            if c.name == name:
                return c
        raise KeyError(f"no clip named {name!r}")


def parse_manifest(obj: dict, base_dir=None) -> Manifest:
    clips = []
    names = set()
    for i, c in enumerate(obj.get("clips", [])):
        name = c.get("name", f"clip{i}")
        if name in names:
            raise ValueError(f"duplicate clip name {name!r}")
        names.add(name)
        for side in ("reference", "distorted"):
            if side not in c:
                raise ValueError(f"clip {name}: missing {side!r} section")
            for k in ("left", "right"):
                if k not in c[side]:
                    raise ValueError(f"clip {name}: {side} lacks a {k!r} source")
        clips.append(ClipSpec(
            name=name, reference=c["reference"], distorted=c["distorted"],
            saliency=c.get("saliency"), gaze=c.get("gaze"), mos=c.get("mos"),
            subject_scores=c.get("subject_scores"), base_dir=base_dir,
            bit_depth=int(c.get("bit_depth", 8)),
        ))
    if not clips:
        raise ValueError("manifest lists no clips")
    return Manifest(clips, base_dir)


def load_manifest(path) -> Manifest:
    path = Path(path)
    with open(path) as fh:
        obj = json.load(fh)
    return parse_manifest(obj, str(path.parent))
