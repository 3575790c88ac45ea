"""Nonlinear fits and agreement statistics against subjective scores.

Observer screening follows ITU-R BT.500 Annex 2: per clip, votes beyond
``mean +- 2 * std`` (kurtosis in [2, 4]) or ``mean +- sqrt(20) * std``
(otherwise) are flagged high (P) or low (Q); a subject is rejected when
``(P + Q) / J > 0.05`` and ``|P - Q| / (P + Q) < 0.3`` over J clips.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import stats as sps
from scipy.optimize import least_squares

N_STARTS = 8
FIT_SEED = 0


@dataclass
class FitResult:
    kind: str
    params: tuple
    residual: float  # RMSE of the fitted curve

    def predict(self, x):
        return FITS[self.kind][0](np.asarray(x, dtype=np.float64), *self.params)


def logistic(x, a, b, c):
    z = np.clip(-b * (x - c), -700, 700)
    return a / (1.0 + np.exp(z))


def power(x, a, b, c):
    return a * np.power(x, b) + c


def linear(x, a, b):
    return a * x + b


def _xy(x, y, n_min):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < n_min:
        raise ValueError(f"need at least {n_min} points, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input")
    if np.ptp(x) == 0:
        raise ValueError("constant x: curve not identifiable")
    return x, y


def _multistart(model, x, y, starts, kind):
    best = None
    for p0 in starts:
        try:
            res = least_squares(lambda p: model(x, *p) - y, p0, method="lm",
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        except (ValueError, FloatingPointError):
            continue
        if not np.all(np.isfinite(res.fun)):
            continue
        cost = float(np.sqrt(np.mean(res.fun ** 2)))
        if best is None or cost < best[1]:
            best = (tuple(float(v) for v in res.x), cost)
    if best is None:
        raise RuntimeError(f"{kind} fit did not converge from any start")
    return FitResult(kind, best[0], best[1])


def logistic_fit(x, y, n_starts: int = N_STARTS, seed: int = FIT_SEED) -> FitResult:
    """Fit ``y = a / (1 + exp(-b (x - c)))`` by multi-start Levenberg-Marquardt."""
    x, y = _xy(x, y, 4)
    span = float(np.ptp(x))
    slope = math.copysign(4.0 / span, np.corrcoef(x, y)[0, 1] if np.ptp(y) > 0 else 1.0)
    rng = np.random.default_rng(seed)
    starts = [np.array([y.max() if slope > 0 else y.max() * 1.0, slope, float(np.median(x))])]
    for _ in range(n_starts - 1):
        starts.append(np.array([
            y.max() * rng.uniform(0.8, 2.0) if y.max() != 0 else rng.uniform(0.5, 2.0),
            slope * rng.uniform(0.1, 10.0),
            x.min() + span * rng.uniform(0.0, 1.0),
        ]))
    return _multistart(logistic, x, y, starts, "logistic")


def power_fit(x, y, n_starts: int = N_STARTS, seed: int = FIT_SEED) -> FitResult:
    """Fit ``y = a * x**b + c`` (x > 0); ``c`` is the limit as x grows when b < 0."""
    x, y = _xy(x, y, 4)
    if np.any(x <= 0):
        raise ValueError("power fit needs x > 0")
    rng = np.random.default_rng(seed)
    starts = []
    for b0 in (-1.0, -0.5, 0.5, 1.0):
        xb = x ** b0
        a0, c0 = np.polyfit(xb, y, 1)
        starts.append(np.array([a0, b0, c0]))
    while len(starts) < n_starts:
        b0 = rng.uniform(-2.0, 2.0)
        a0, c0 = np.polyfit(x ** b0, y, 1)
        starts.append(np.array([a0, b0, c0]))
    return _multistart(power, x, y, starts[:n_starts], "power")


def linear_fit(x, y) -> FitResult:
    x, y = _xy(x, y, 2)
    a, b = np.polyfit(x, y, 1)
    r = linear(x, a, b) - y
    return FitResult("linear", (float(a), float(b)), float(np.sqrt(np.mean(r * r))))


FITS = {"logistic": (logistic, logistic_fit), "power": (power, power_fit), "linear": (linear, linear_fit)}


@dataclass
class StatsReport:
    pcc: float
    pcc_raw: float
    scc: float
    rmse: float
    outlier_ratio: float
    fit: Optional[str]
    params: tuple
    residual: float

    def as_dict(self):
        d = asdict(self)
        d["params"] = list(self.params)
        return d


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValueError("correlation undefined for a constant vector")
    ac, bc = a - a.mean(), b - b.mean()
    return float(np.clip((ac @ bc) / math.sqrt((ac @ ac) * (bc @ bc)), -1.0, 1.0))


def spearman(a, b) -> float:
    """Pearson correlation of average ranks."""
    return pearson(sps.rankdata(a), sps.rankdata(b))


def perf_stats(pred, mos, fit: Optional[str] = "logistic", ci=None) -> StatsReport:
    """PCC (after the fitted mapping), SCC, RMSE and outlier ratio.

    ``ci`` holds per-clip MOS 95% confidence half-widths; without it a point
    is an outlier when its residual exceeds twice the RMSE.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    mos = np.asarray(mos, dtype=np.float64).ravel()
    if len(pred) != len(mos):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(mos)} MOS")
    if len(pred) < 3:
        raise ValueError("need at least 3 clips")
    if fit is None:
        mapped, params, residual = pred, (), float(np.sqrt(np.mean((pred - mos) ** 2)))
    else:
        if fit not in FITS:
            raise ValueError(f"unknown fit {fit!r}")
        res = FITS[fit][1](pred, mos)
        mapped, params, residual = res.predict(pred), res.params, res.residual
    err = np.abs(mapped - mos)
    rmse = float(np.sqrt(np.mean(err ** 2)))
    if ci is not None:
        bound = 2.0 * np.asarray(ci, dtype=np.float64).ravel()
        if len(bound) != len(mos):
            raise ValueError("confidence intervals do not match the MOS vector")
    else:
        bound = 2.0 * rmse
    pcc = pearson(mapped, mos) if np.ptp(mapped) > 0 else 0.0
    return StatsReport(pcc=pcc, pcc_raw=pearson(pred, mos), scc=spearman(pred, mos), rmse=rmse,
                       outlier_ratio=float(np.mean(err > bound)), fit=fit, params=tuple(params),
                       residual=residual)


def mos_from_subjects(scores):
    """``(mos, ci95)`` per clip from a ``(subjects, clips)`` matrix."""
    s = np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    mos = s.mean(axis=0)
    ci = 1.96 * s.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mos)
    return mos, ci


@dataclass
class ScreenResult:
    kept: list
    rejected: list
    high: np.ndarray  # P per subject
    low: np.ndarray  # Q per subject


def outlier_screen(scores) -> ScreenResult:
    """Single-pass BT.500 Annex 2 observer screening on ``(subjects, clips)`` votes."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("scores must be (subjects, clips)")
    n, j = s.shape
    if n < 3:
        raise ValueError("need at least 3 subjects")
    mean = s.mean(axis=0)
    std = s.std(axis=0, ddof=1)
    m2 = ((s - mean) ** 2).mean(axis=0)
    m4 = ((s - mean) ** 4).mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        kurt = np.where(m2 > 0, m4 / (m2 * m2), 0.0)
    factor = np.where((kurt >= 2) & (kurt <= 4), 2.0, math.sqrt(20.0))
    hi = (s >= mean + factor * std) & (std > 0)
    lo = (s <= mean - factor * std) & (std > 0)
    p, q = hi.sum(axis=1), lo.sum(axis=1)
    rejected = []
    for i in range(n):
        total = p[i] + q[i]
        if total / j > 0.05 and abs(p[i] - q[i]) / total < 0.3:
            rejected.append(i)
    kept = [i for i in range(n) if i not in rejected]
    return ScreenResult(kept, rejected, p, q)
