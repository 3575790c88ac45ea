"""Metric orchestration over a manifest, saliency evaluation and reports.

Every numeric value in a report is rounded to 9 significant digits, so a
report emitted, parsed and emitted again is byte-identical.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from hv3d import evaluation as ev
from hv3d import frame as fc
from hv3d import noref, pooling
from hv3d.geometry import fovea_kernel
from hv3d.metric import Hv3dParams, StereoFrame, hv3d_frame, minkowski_pool
from hv3d.stats import perf_stats

SIG_DIGITS = 9

FR_METRICS = {
    "psnr": lambda r, d, s, peak: fc.psnr(r, d, peak),
    "ssim": lambda r, d, s, peak: fc.ssim(r, d, peak),
    "msssim": lambda r, d, s, peak: fc.ms_ssim(r, d, peak),
    "vif": lambda r, d, s, peak: fc.vif(r, d),
    "psnr_s": lambda r, d, s, peak: pooling.weighted_psnr(r, d, s, peak),
    "ssim_s": lambda r, d, s, peak: pooling.weighted_ssim(r, d, s, peak),
    "msssim_s": lambda r, d, s, peak: pooling.weighted_msssim(r, d, s, peak),
    "vif_s": lambda r, d, s, peak: pooling.weighted_vif(r, d, s),
}
NR_METRICS = {
    "nrpbm": noref.nrpbm_blur_s,
    "farias_blur": noref.farias_blur_s,
    "farias_block": noref.farias_block_s,
}
NR_METRICS.update({k + "_s": v for k, v in list(NR_METRICS.items())})
STEREO_METRICS = ("hv3d", "hv3d_s")
METRICS = tuple(FR_METRICS) + tuple(NR_METRICS) + STEREO_METRICS


def needs_saliency(metric: str) -> bool:
    return metric.endswith("_s")


def sig(x, digits: int = SIG_DIGITS):
    """Round floats (recursively through containers) to ``digits`` significant digits."""
    if isinstance(x, bool) or x is None or isinstance(x, (str, int)):
        return x
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            raise ValueError("non-finite value in report")
        return float(f"{x:.{digits}g}")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {str(k): sig(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [sig(v, digits) for v in x]
    raise TypeError(f"cannot serialise {type(x).__name__}")


def fmt(x, digits: int = SIG_DIGITS) -> str:
    return f"{float(x):.{digits}g}"


@dataclass
class ClipScore:
    name: str
    score: float
    frames: list
    diagnostics: Optional[list] = None  # per-frame (q_cyclopean, q_depth, hv3d) for HV3D


@dataclass
class MetricRun:
    metric: str
    params: dict
    clips: list = field(default_factory=list)
    timing_s: float = 0.0

    def scores(self):
        return [c.score for c in self.clips]

    def as_dict(self):
        return {"metric": self.metric, "params": self.params, "timing_s": self.timing_s,
                "clips": [asdict(c) for c in self.clips]}


def params_dict(params: Hv3dParams) -> dict:
    return asdict(params)


def _indices(n: int, frames) -> list:
    if frames is None:
        return list(range(n))
    a, b = frames
    b = n if b is None else b
    if not 0 <= a < b <= n:
        raise ValueError(f"frame range {a}..{b} outside 0..{n}")
    return list(range(a, b))


def _require(clip, side, key, metric):
    if getattr(clip, side).get(key) is None:
        raise ValueError(f"clip {clip.name}: metric {metric} requires a {side} {key} source")


def _stereo_frames(clip, side, idx):
    streams = {k: clip.stream(side, k, idx) for k in ("left", "right", "disparity",
                                                     "disparity_right", "depth_left", "depth_right")}
    for _ in idx:
        vals = {k: (next(s) if s is not None else None) for k, s in streams.items()}
        yield StereoFrame(**vals)


def score_clip(clip, metric: str, params: Hv3dParams = Hv3dParams(), frames=None) -> ClipScore:
    """Score one clip; 2D metrics average both views, then frames."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    if needs_saliency(metric) and clip.saliency is None:
        raise ValueError(f"clip {clip.name}: metric {metric}: saliency source required")
    n = clip.frame_count()
    idx = _indices(n, frames)
    sal = (saliency_stream(clip, idx) if needs_saliency(metric) else iter([None] * len(idx)))

    if metric in STEREO_METRICS:
        _require(clip, "reference", "disparity", metric)
        if not any(clip.distorted.get(k) is not None for k in ("disparity", "depth_left")):
            raise ValueError(f"clip {clip.name}: metric {metric} requires a distorted disparity or depth source")
        if params.peak != clip.peak:
            from dataclasses import replace

            params = replace(params, peak=clip.peak)
        per, diag = [], []
        ref_it, dist_it = _stereo_frames(clip, "reference", idx), _stereo_frames(clip, "distorted", idx)
        for k, (r, d, s) in enumerate(zip(ref_it, dist_it, sal)):
            base = "left" if idx[k] % 2 == 0 else "right"
            fs = hv3d_frame(r, d, params, base, idx[k], s)
            per.append(fs.hv3d)
            diag.append([idx[k], fs.q_cyclopean, fs.q_depth, fs.hv3d])
        return ClipScore(clip.name, minkowski_pool(per, params.p, params.tau), per, diag)

    per = []
    if metric in NR_METRICS:
        fn = NR_METRICS[metric]
        dl, dr = clip.stream("distorted", "left", idx), clip.stream("distorted", "right", idx)
        for l_, r_, s in zip(dl, dr, sal):
            per.append(0.5 * (fn(l_, s) + fn(r_, s)))
    else:
        fn = FR_METRICS[metric]
        streams = [clip.stream(side, k, idx) for side in ("reference", "distorted") for k in ("left", "right")]
        for rl, rr, dl, dr, s in zip(*streams, sal):
            per.append(0.5 * (fn(rl, dl, s, clip.peak) + fn(rr, dr, s, clip.peak)))
    return ClipScore(clip.name, float(np.mean(per)), per)


def saliency_stream(clip, idx):
    from hv3d.io import load_sequence

    return load_sequence(clip.saliency, clip.base_dir, idx)


def _score_task(args):
    clip, metric, params, frames = args
    return score_clip(clip, metric, params, frames)


def run_metric(manifest, metric: str, params: Optional[Hv3dParams] = None, frames=None,
               jobs: int = 1) -> MetricRun:
    """Score every clip of ``manifest``; clips run in ``jobs`` processes, merged in order.

    Workers are capped at the CPU count; oversubscribing only adds overhead.
    """
    params = params or Hv3dParams()
    t0 = time.perf_counter()
    tasks = [(c, metric, params, frames) for c in manifest.clips]
    workers = min(jobs, len(tasks), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            clips = list(ex.map(_score_task, tasks))
    else:
        clips = [_score_task(t) for t in tasks]
    run = MetricRun(metric, params_dict(params) if metric in STEREO_METRICS else {}, clips)
    run.timing_s = time.perf_counter() - t0
    return run


# -- saliency evaluation ---------------------------------------------------

def _clip_gaze(clip):
    """Gaze log of a clip with out-of-frame records dropped."""
    path = clip.gaze_path()
    if path is None:
        return None
    h, w = next(clip.stream("reference", "left", [0])).shape
    return ev.GazeLog.read_csv(path, w, h)


def evaluate_saliency_frames(sal_maps, log, indices, negative_pool=None, seed=0,
                             kernel=None, grid=ev.EMD_GRID):
    """Average :class:`EvalScores` over frames that have gaze; returns ``(scores, n_frames)``.

    Without ``negative_pool`` the sAUC negatives are the gaze points of the
    other frames of the same log.
    """
    if kernel is None:
        from hv3d.geometry import ViewingGeometry

        kernel = fovea_kernel(ViewingGeometry())
    rows = []
    for i, S in zip(indices, sal_maps):
        fix = log.points(i)
        if len(fix) == 0:
            continue
        fdm = ev.fdm_from_gaze(log, S.shape, kernel, i)
        pool = negative_pool if negative_pool is not None else log.points()[log.frame != i]
        if len(pool) == 0:
            pool = fix
        rows.append(ev.evaluate_map(S, fdm, fix, pool, seed + int(i), grid).as_dict())
    if not rows:
        raise ValueError("no frame has gaze data")
    keys = rows[0].keys()
    return {k: float(np.mean([r[k] for r in rows])) for k in keys}, len(rows)


def saliency_eval(manifest, frames=None, seed: int = 0, geometry=None) -> list:
    """Evaluate each clip's saliency maps against its gaze log.

    sAUC negatives come from the gaze logs of other scenes (clips with a
    different gaze file) when there are any, else from the clip's other
    frames. Clips sharing both saliency source and gaze log are evaluated
    once.
    """
    from hv3d.geometry import ViewingGeometry

    kernel = fovea_kernel(geometry or ViewingGeometry())
    clips = [c for c in manifest.clips if c.saliency is not None and c.gaze is not None]
    if not clips:
        raise ValueError("no clip has both a saliency source and a gaze log")
    logs = {}
    for c in clips:
        key = str(c.gaze_path())
        if key not in logs:
            logs[key] = _clip_gaze(c)
    done = {}
    out = []
    for clip in clips:
        gkey = str(clip.gaze_path())
        key = (json.dumps(clip.saliency, sort_keys=True), gkey)
        if key not in done:
            others = [lg.points() for k, lg in logs.items() if k != gkey and len(lg)]
            pool = np.concatenate(others) if others else None
            idx = _indices(clip.frame_count(), frames)
            done[key] = evaluate_saliency_frames(saliency_stream(clip, idx), logs[gkey], idx,
                                                 pool, seed, kernel)
        scores, n = done[key]
        out.append({"clip": clip.name, "frames": n, "dropped_gaze": logs[gkey].dropped, **scores})
    return out


# -- reports ---------------------------------------------------------------

def stats_for_runs(manifest, runs) -> list:
    """Agreement with MOS per metric when at least 3 clips carry a MOS."""
    mos = {c.name: c.mos for c in manifest.clips if c.mos is not None}
    out = []
    for run in runs:
        pairs = [(c.score, mos[c.name]) for c in run.clips if c.name in mos]
        if len(pairs) < 3:
            continue
        pred, y = np.array(pairs).T
        if np.ptp(pred) == 0 or np.ptp(y) == 0:
            continue
        try:
            rep = perf_stats(pred, y, "logistic" if len(pairs) >= 4 else "linear")
        except RuntimeError:
            rep = perf_stats(pred, y, "linear")
        out.append({"metric": run.metric, **rep.as_dict()})
    return out


def build_report(runs, saliency=None, stats=None, seed: int = 0) -> dict:
    rep = {"tool": "hv3d", "seed": seed, "metrics": [r.as_dict() for r in runs]}
    if saliency is not None:
        rep["saliency_eval"] = saliency
    if stats:
        rep["stats"] = stats
    return sig(rep)


def emit_json(report) -> str:
    return json.dumps(sig(report), indent=2, sort_keys=True) + "\n"


def parse_json(text: str) -> dict:
    return json.loads(text)


def emit_csv(runs) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clip", "metric", "score", "frames"])
    for run in runs:
        for c in run.clips:
            w.writerow([c.name, run.metric, fmt(c.score), len(c.frames)])
    return buf.getvalue()


def emit_frame_csv(run) -> str:
    """Per-frame HV3D diagnostics: clip, frame, q_cyclopean, q_depth, hv3d."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clip", "frame", "q_cyclopean", "q_depth", "hv3d"])
    for c in run.clips:
        for row in c.diagnostics or []:
            w.writerow([c.name, row[0]] + [fmt(v) for v in row[1:]])
    return buf.getvalue()


def emit_saliency_csv(rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = ["clip", "frames", "auc", "sauc", "nss", "pcc", "sim", "kld", "emd"]
    w.writerow(keys)
    for r in rows:
        w.writerow([r["clip"], r["frames"]] + [fmt(r[k]) for k in keys[2:]])
    return buf.getvalue()
