"""Gaze logs, fixation density maps and saliency-map evaluation metrics.

Maps are 2D arrays indexed ``[y, x]``; fixations are ``(n, 2)`` integer
arrays of ``(y, x)`` pixel coordinates. Every random draw takes an explicit
seed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

AUC_THRESHOLDS = 256
SAUC_REPEATS = 10
KLD_EPS = 1e-12
EMD_GRID = (32, 18)  # (width, height)
GAZE_HEADER = ("timestamp_ms", "subject_id", "frame_index", "x", "y")


# -- gaze logs and fixation maps ---------------------------------------------

@dataclass
class GazeLog:
    timestamp: np.ndarray
    subject: np.ndarray
    frame: np.ndarray
    x: np.ndarray
    y: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.float64)
        self.subject = np.asarray(self.subject).astype(str)
        self.frame = np.asarray(self.frame, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        n = len(self.timestamp)
        if not all(len(a) == n for a in (self.subject, self.frame, self.x, self.y)):
            raise ValueError("gaze columns differ in length")
        for sid in np.unique(self.subject):
            t = self.timestamp[self.subject == sid]
            if np.any(np.diff(t) < 0):
                raise ValueError(f"timestamps decrease for subject {sid}")

    def __len__(self):
        return len(self.timestamp)

    @classmethod
    def read_csv(cls, path, width=None, height=None) -> "GazeLog":
        cols = {k: [] for k in GAZE_HEADER}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(GAZE_HEADER) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: gaze CSV lacks columns {sorted(missing)}")
            for line, row in enumerate(reader, start=2):
                try:
                    cols["timestamp_ms"].append(float(row["timestamp_ms"]))
                    cols["subject_id"].append(row["subject_id"])
                    cols["frame_index"].append(int(row["frame_index"]))
                    cols["x"].append(float(row["x"]))
                    cols["y"].append(float(row["y"]))
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{line}: bad gaze record ({exc})") from None
        log = cls(cols["timestamp_ms"], cols["subject_id"], cols["frame_index"], cols["x"], cols["y"])
        if width is not None and height is not None:
            log = log.clipped(width, height)
        return log

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(GAZE_HEADER)
            for row in zip(self.timestamp, self.subject, self.frame, self.x, self.y):
                w.writerow([repr(float(row[0])), row[1], int(row[2]), repr(float(row[3])), repr(float(row[4]))])

    def _subset(self, keep, dropped=0) -> "GazeLog":
        return GazeLog(self.timestamp[keep], self.subject[keep], self.frame[keep],
                       self.x[keep], self.y[keep], self.dropped + dropped)

    def clipped(self, width: int, height: int) -> "GazeLog":
        """Drop records outside the frame; the count accumulates in ``dropped``."""
        xi, yi = np.rint(self.x), np.rint(self.y)
        keep = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        return self._subset(keep, int((~keep).sum()))

    def for_frame(self, index: int) -> "GazeLog":
        return self._subset(self.frame == index)

    def points(self, index=None) -> np.ndarray:
        """Rounded ``(y, x)`` gaze coordinates, optionally for one frame."""
        sel = slice(None) if index is None else self.frame == index
        return np.column_stack([np.rint(self.y[sel]), np.rint(self.x[sel])]).astype(np.intp)

    def frames(self) -> np.ndarray:
        return np.unique(self.frame)


def splat(shape, points, kernel) -> np.ndarray:
    """Sum of ``kernel`` copies centred on each ``(y, x)`` point, cropped at the border."""
    h, w = shape
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    out = np.zeros((h, w))
    for y, x in np.asarray(points, dtype=np.intp).reshape(-1, 2):
        y0, y1 = max(y - ry, 0), min(y + ry + 1, h)
        x0, x1 = max(x - rx, 0), min(x + rx + 1, w)
        if y0 >= y1 or x0 >= x1:
            continue
        out[y0:y1, x0:x1] += kernel[y0 - y + ry:y1 - y + ry, x0 - x + rx:x1 - x + rx]
    return out


def fdm_from_gaze(log: GazeLog, shape, kernel, frame_index: int) -> np.ndarray:
    """Fixation density map of one frame, peak-normalised (all-zero without gaze)."""
    sub = log.clipped(shape[1], shape[0]).for_frame(frame_index)
    out = np.zeros(shape)
    subjects = np.unique(sub.subject)
    for sid in subjects:
        out += splat(shape, sub._subset(sub.subject == sid).points(), kernel)
    if len(subjects):
        out /= len(subjects)
    peak = out.max()
    return out / peak if peak > 0 else out


# -- helpers -------------------------------------------------------------------

def _map(S, name="map") -> np.ndarray:
    a = np.asarray(S, dtype=np.float64)
    if a.ndim != 2 or a.size == 0 or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a finite 2D array")
    return a


def _fixations(fix, shape) -> np.ndarray:
    f = np.asarray(fix, dtype=np.intp).reshape(-1, 2)
    if len(f) == 0:
        raise ValueError("empty fixation set")
    inside = (f[:, 0] >= 0) & (f[:, 0] < shape[0]) & (f[:, 1] >= 0) & (f[:, 1] < shape[1])
    if not inside.all():
        raise ValueError("fixations outside the map")
    return f


def _minmax(S):
    lo, hi = S.min(), S.max()
    return (S - lo) / (hi - lo) if hi > lo else np.zeros_like(S)


def _sum_normalized(S, name, eps=0.0):
    a = _map(S, name)
    if np.any(a < 0):
        raise ValueError(f"{name} has negative values")
    if not a.sum() > 0:
        raise ValueError(f"{name} is all zero")
    a = a + eps
    return a / a.sum()


def _roc_area(pos, neg, n_thresh=AUC_THRESHOLDS):
    thresholds = np.linspace(1.0, 0.0, n_thresh)
    tpr = (pos[None, :] >= thresholds[:, None]).mean(axis=1)
    fpr = (neg[None, :] >= thresholds[:, None]).mean(axis=1)
    tpr = np.concatenate([[0.0], tpr])
    fpr = np.concatenate([[0.0], fpr])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


# -- metrics -------------------------------------------------------------------

def auc(S, fixations, seed: int = 0) -> float:
    """ROC area: fixated pixels against an equal-size seeded draw of non-fixated pixels."""
    S = _map(S, "saliency")
    fix = _fixations(fixations, S.shape)
    sn = _minmax(S)
    flat = np.ravel_multi_index((fix[:, 0], fix[:, 1]), S.shape)
    fixated = np.zeros(S.size, dtype=bool)
    fixated[flat] = True
    candidates = np.flatnonzero(~fixated)
    if len(candidates) == 0:
        raise ValueError("every pixel is fixated; no negatives to draw")
    rng = np.random.default_rng(seed)
    n = len(fix)
    neg = rng.choice(candidates, size=n, replace=n > len(candidates))
    return _roc_area(sn.ravel()[flat], sn.ravel()[neg])


def shuffled_auc(S, fixations, negative_pool, seed: int = 0, repeats: int = SAUC_REPEATS) -> float:
    """AUC with negatives drawn from other scenes' fixations, averaged over repeats."""
    S = _map(S, "saliency")
    fix = _fixations(fixations, S.shape)
    pool = np.asarray(negative_pool, dtype=np.intp).reshape(-1, 2)
    inside = (pool[:, 0] >= 0) & (pool[:, 0] < S.shape[0]) & (pool[:, 1] >= 0) & (pool[:, 1] < S.shape[1])
    pool = pool[inside]
    if len(pool) == 0:
        raise ValueError("empty negative pool")
    sn = _minmax(S)
    pos = sn[fix[:, 0], fix[:, 1]]
    rng = np.random.default_rng(seed)
    n = len(fix)
    vals = []
    for _ in range(repeats):
        idx = rng.choice(len(pool), size=n, replace=n > len(pool))
        vals.append(_roc_area(pos, sn[pool[idx, 0], pool[idx, 1]]))
    return float(np.mean(vals))


def nss(S, fixations) -> float:
    S = _map(S, "saliency")
    fix = _fixations(fixations, S.shape)
    sd = S.std()
    if sd == 0:
        return 0.0
    z = (S - S.mean()) / sd
    return float(z[fix[:, 0], fix[:, 1]].mean())


def pcc_maps(S, fdm) -> float:
    a, b = _map(S, "saliency"), _map(fdm, "fixation map")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    a, b = a.ravel() - a.mean(), b.ravel() - b.mean()
    den = np.sqrt((a * a).sum() * (b * b).sum())
    if den == 0:
        raise ValueError("correlation undefined for a constant map")
    return float(np.clip((a * b).sum() / den, -1.0, 1.0))


def sim(S, fdm) -> float:
    a, b = _sum_normalized(S, "saliency"), _sum_normalized(fdm, "fixation map")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.minimum(a, b).sum())


def kld(S, fdm, eps: float = KLD_EPS) -> float:
    """``KL(fdm || S)`` in nats after an ``eps`` floor and sum normalisation."""
    s = _sum_normalized(S, "saliency", eps)
    f = _sum_normalized(fdm, "fixation map", eps)
    if s.shape != f.shape:
        raise ValueError(f"dimension mismatch: {s.shape} vs {f.shape}")
    return float(max((f * np.log(f / s)).sum(), 0.0))


def _area_matrix(n_in, n_out):
    """Row ``i`` averages the input span covered by output cell ``i``."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    px = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, px + 1) - np.maximum(lo, px), 0.0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def area_resize(S, grid) -> np.ndarray:
    """Area-mean resample to ``grid = (width, height)``."""
    a = _map(S)
    gw, gh = grid
    if a.shape == (gh, gw):
        return a.copy()
    return _area_matrix(a.shape[0], gh) @ a @ _area_matrix(a.shape[1], gw).T


def transport_cost(a, b, coords) -> float:
    """Exact optimal transport between equal-mass histograms on points ``coords``.

    Mass present in both is left in place (free under a metric ground
    cost); the remainder is solved as a linear program.
    """
    common = np.minimum(a, b)
    a, b = a - common, b - common
    src, dst = np.flatnonzero(a > 1e-15), np.flatnonzero(b > 1e-15)
    if len(src) == 0 or len(dst) == 0:
        return 0.0
    supply, demand = a[src], b[dst]
    demand = demand * supply.sum() / demand.sum()
    cost = np.linalg.norm(coords[src][:, None, :] - coords[dst][None, :, :], axis=-1)
    ns, nd = len(src), len(dst)
    rows = sparse.kron(sparse.eye(ns), np.ones((1, nd)))
    cols = sparse.kron(np.ones((1, ns)), sparse.eye(nd))
    res = linprog(cost.ravel(), A_eq=sparse.vstack([rows, cols]).tocsr(),
                  b_eq=np.concatenate([supply, demand]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport solver failed: {res.message}")
    return float(res.fun)


def emd(S, fdm, grid=EMD_GRID) -> float:
    """Earth mover's distance in grid-cell units after area resampling to ``grid``."""
    if np.shape(S) != np.shape(fdm):
        raise ValueError(f"dimension mismatch: {np.shape(S)} vs {np.shape(fdm)}")
    a = _sum_normalized(area_resize(_sum_normalized(S, "saliency"), grid), "saliency")
    b = _sum_normalized(area_resize(_sum_normalized(fdm, "fixation map"), grid), "fixation map")
    gh, gw = a.shape
    yy, xx = np.mgrid[0:gh, 0:gw]
    coords = np.column_stack([yy.ravel(), xx.ravel()]).astype(np.float64)
    return transport_cost(a.ravel(), b.ravel(), coords)


@dataclass
class EvalScores:
    auc: float
    sauc: float
    nss: float
    pcc: float
    sim: float
    kld: float
    emd: float

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def evaluate_map(S, fdm, fixations, negative_pool, seed: int = 0, grid=EMD_GRID) -> EvalScores:
    return EvalScores(
        auc=auc(S, fixations, seed),
        sauc=shuffled_auc(S, fixations, negative_pool, seed),
        nss=nss(S, fixations),
        pcc=pcc_maps(S, fdm),
        sim=sim(S, fdm),
        kld=kld(S, fdm),
        emd=emd(S, fdm, grid),
    )


# -- baselines -----------------------------------------------------------------

def chance_map(shape, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=shape)


def center_map(shape, std: float = 300.0) -> np.ndarray:
    """Centred isotropic Gaussian peaking at 1; ``std`` in pixels."""
    if not std > 0:
        raise ValueError("std must be positive")
    h, w = shape
    y = np.arange(h) - (h - 1) / 2.0
    x = np.arange(w) - (w - 1) / 2.0
    return np.exp(-(y[:, None] ** 2 + x[None, :] ** 2) / (2.0 * std * std))


def center_bias_mix(S, w: float, std: float = 300.0) -> np.ndarray:
    """``w * S + (1 - w) * center_map``."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("center-bias weight must lie in [0, 1]")
    S = _map(S, "saliency")
    return w * S + (1.0 - w) * center_map(S.shape, std)


def moment_of_inertia(mask) -> float:
    """First Hu invariant ``eta20 + eta02`` of a binary mask."""
    m = np.asarray(mask).astype(bool)
    if m.ndim != 2 or not m.any():
        raise ValueError("mask must be 2D with at least one set pixel")
    ys, xs = np.nonzero(m)
    m00 = float(len(ys))
    yc, xc = ys.mean(), xs.mean()
    mu20 = float(((xs - xc) ** 2).sum())
    mu02 = float(((ys - yc) ** 2).sum())
    return (mu20 + mu02) / m00 ** 2
