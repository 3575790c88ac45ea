"""Command-line entry point: ``hv3d <command> ...``.

Numbers are printed with 9 significant digits. ``--frames a..b`` selects
frames ``a`` up to but excluding ``b`` (``a..`` runs to the end).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from hv3d import bench
from hv3d import evaluation as ev
from hv3d.io import load_manifest, read_f32, read_pgm
from hv3d.metric import Hv3dParams, calibrate_exponents, grid_axis
from hv3d.stats import FITS, perf_stats

log = logging.getLogger("hv3d")


def frame_range(text: str):
    a, sep, b = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError("expected a..b")
    try:
        start = int(a) if a else 0
        stop = int(b) if b else None
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad frame range {text!r}") from None
    if start < 0 or (stop is not None and stop <= start):
        raise argparse.ArgumentTypeError(f"empty frame range {text!r}")
    return start, stop


def grid_spec(text: str):
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must be start:stop:step") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    return start, stop, step


def load_params(path) -> Hv3dParams:
    if path is None:
        return Hv3dParams()
    with open(path) as fh:
        return Hv3dParams.from_dict(json.load(fh))


def _write(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    return rows


def _column(rows, name, path):
    try:
        return np.array([float(r[name]) for r in rows])
    except KeyError:
        raise ValueError(f"{path}: missing column {name!r}") from None


# -- commands ----------------------------------------------------------------

def cmd_score(args):
    manifest = load_manifest(args.manifest)
    clip = manifest.clip(args.clip)
    params = load_params(args.params)
    sub = type(manifest)([clip], manifest.base_dir)
    runs = [bench.run_metric(sub, m, params, args.frames) for m in (args.metric or ["hv3d"])]
    _write(bench.emit_json(bench.build_report(runs, seed=args.seed)), args.out)


def cmd_batch(args):
    manifest = load_manifest(args.manifest)
    for c in manifest.clips:
        c.check_files()
    params = load_params(args.params)
    runs = []
    for m in args.metric or ["hv3d"]:
        log.info("running %s on %d clips", m, len(manifest.clips))
        runs.append(bench.run_metric(manifest, m, params, args.frames, args.jobs))
    sal = bench.saliency_eval(manifest, args.frames, args.seed, params.geometry) if args.saliency_eval else None
    report = bench.build_report(runs, sal, bench.stats_for_runs(manifest, runs), args.seed)
    if args.out is None:
        sys.stdout.write(bench.emit_json(report))
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(bench.emit_json(report))
    (out / "scores.csv").write_text(bench.emit_csv(runs))
    for r in runs:
        if r.metric in bench.STEREO_METRICS:
            (out / f"{r.metric}_frames.csv").write_text(bench.emit_frame_csv(r))
    if sal is not None:
        (out / "saliency.csv").write_text(bench.emit_saliency_csv(sal))
    log.info("wrote %s", out)


def _saliency_files(path):
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix.lower() in (".pgm", ".f32"))
        if not files:
            raise ValueError(f"{p}: no .pgm or .f32 saliency maps")
        return files
    return [p]


def _read_map(f, shape=None):
    if f.suffix.lower() == ".pgm":
        return read_pgm(f)
    if shape is None:
        raise ValueError(f"{f}: raw float maps need --size WxH")
    return next(read_f32(f, shape[1], shape[0], 1))


def cmd_saliency_eval(args):
    files = _saliency_files(args.saliency)
    shape = None
    if args.size:
        w, h = (int(v) for v in args.size.lower().split("x"))
        shape = (h, w)
    first = _read_map(files[0], shape)
    h, w = first.shape
    gaze = ev.GazeLog.read_csv(args.gaze, w, h)
    pool = None
    if args.negative_gaze:
        pool = ev.GazeLog.read_csv(args.negative_gaze, w, h).points()
    idx = list(range(len(files)))
    if args.frames:
        a, b = args.frames
        idx = idx[a:b]
    maps = (_read_map(files[i], shape) for i in idx)
    from hv3d.geometry import fovea_kernel

    kernel = fovea_kernel(load_params(args.params).geometry)
    per = []
    for i, S in zip(idx, maps):
        fix = gaze.points(i)
        if len(fix) == 0:
            continue
        scores, _ = bench.evaluate_saliency_frames([S], gaze, [i], pool, args.seed, kernel)
        per.append({"frame": i, **scores})
    if not per:
        raise ValueError("no frame has gaze data")
    keys = ["auc", "sauc", "nss", "pcc", "sim", "kld", "emd"]
    mean = {k: float(np.mean([r[k] for r in per])) for k in keys}
    report = {"frames": per, "mean": mean, "dropped_gaze": gaze.dropped, "seed": args.seed}
    if args.format == "csv":
        lines = ["frame," + ",".join(keys)]
        lines += [f"{r['frame']}," + ",".join(bench.fmt(r[k]) for k in keys) for r in per]
        lines.append("mean," + ",".join(bench.fmt(mean[k]) for k in keys))
        _write("\n".join(lines) + "\n", args.out)
    else:
        _write(bench.emit_json(report), args.out)


def cmd_fit(args):
    rows = _read_table(args.table)
    x = _column(rows, args.x, args.table)
    y = _column(rows, args.y, args.table)
    ci = _column(rows, "ci", args.table) if "ci" in rows[0] else None
    fit = None if args.fit == "none" else args.fit
    rep = perf_stats(x, y, fit, ci)
    _write(bench.emit_json(rep.as_dict()), args.out)


def cmd_calibrate(args):
    rows = _read_table(args.table)
    comp = np.column_stack([_column(rows, k, args.table) for k in ("mean_ssim", "vif", "var_term")])
    mos = _column(rows, "mos", args.table)
    grid = {}
    for k in ("beta1", "beta2", "beta3"):
        g = getattr(args, k) or args.grid
        if g is not None:
            grid[k] = g
    cal = calibrate_exponents(comp, mos, grid)
    sizes = {k: len(grid_axis(*grid[k])) for k in grid}
    _write(bench.emit_json({"beta1": cal.betas[0], "beta2": cal.betas[1], "beta3": cal.betas[2],
                            "pcc": cal.pcc, "grid_sizes": sizes}), args.out)


def cmd_synth(args):
    from hv3d.synthetic import write_dataset

    w, h = (int(v) for v in args.size.lower().split("x"))
    path = write_dataset(args.out_dir, w, h, args.frames, args.seed)
    sys.stdout.write(f"{path}\n")


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hv3d", description="Stereoscopic video quality metrics and saliency evaluation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    def common(sp, metric=True):
        if metric:
            sp.add_argument("--metric", action="append", choices=bench.METRICS,
                            help="metric id (repeatable; default hv3d)")
        sp.add_argument("--params", help="JSON file with HV3D parameters")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--frames", type=frame_range, help="frame range a..b (b exclusive)")

    sp = sub.add_parser("score", parents=[verbose], help="score one clip of a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--clip", help="clip name (needed when the manifest has several)")
    common(sp)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("batch", parents=[verbose], help="score every clip of a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--saliency-eval", action="store_true", help="also evaluate saliency maps against gaze")
    sp.add_argument("--jobs", type=int, default=1, help="clips scored in parallel")
    common(sp)
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("saliency-eval", parents=[verbose], help="evaluate saliency maps against a gaze log")
    sp.add_argument("--saliency", required=True, help="directory of per-frame maps (.pgm/.f32, sorted) or one map")
    sp.add_argument("--gaze", required=True, help="CSV: timestamp_ms,subject_id,frame_index,x,y")
    sp.add_argument("--negative-gaze", help="gaze CSV of other scenes for sAUC negatives")
    sp.add_argument("--size", help="WxH of raw float maps")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    common(sp, metric=False)
    sp.set_defaults(func=cmd_saliency_eval)

    sp = sub.add_parser("fit", parents=[verbose], help="fit scores to MOS and report PCC/SCC/RMSE/OR")
    sp.add_argument("table", help="CSV with score and mos columns (optional ci)")
    sp.add_argument("--x", default="score")
    sp.add_argument("--y", default="mos")
    sp.add_argument("--fit", choices=tuple(FITS) + ("none",), default="logistic")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("calibrate", parents=[verbose], help="grid-search the HV3D exponents")
    sp.add_argument("table", help="CSV with mean_ssim, vif, var_term, mos columns")
    sp.add_argument("--grid", type=grid_spec, help="start:stop:step for every exponent")
    for k in ("beta1", "beta2", "beta3"):
        sp.add_argument(f"--{k}", type=grid_spec, help=f"start:stop:step for {k}")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("synth", parents=[verbose], help="write a synthetic stereo dataset and its manifest")
    sp.add_argument("out_dir")
    sp.add_argument("--size", default="320x180", help="WxH")
    sp.add_argument("--frames", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, FileNotFoundError, KeyError, RuntimeError) as exc:
        sys.stderr.write(f"hv3d: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
