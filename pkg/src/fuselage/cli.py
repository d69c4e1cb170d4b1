"""Command-line front end for the full pipeline.

Subcommands: project, corrupt, fuse, eval, simulate, calibrate. Every
subcommand is deterministic given its flags and seed: per-frame work
runs through an order-preserving thread map and outputs are written in
sorted frame order, so reruns and different ``--threads`` values
produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from .corruption import CorruptionKind, CorruptionSpec, corrupt
from .degradation import run_degradation_grid, write_grid_csv
from .errors import FormatError, FuselageError, ParseError
from .evaluation import GroundTruthFrame, evaluate_detections, match_detections
from .formats import (
    DetectionRecord,
    group_detections,
    read_calib,
    read_detections,
    read_kitti_labels,
    read_raster,
    read_velodyne,
    write_detections,
    write_pgm,
    write_raster,
)
from .geometry import CLASS_NAMES, Modality
from .nms import Decay, DetectionSet, FusionConfig, multi_source_nms
from .plots import line_chart_svg, scatter_svg, write_svg
from .projection import DEFAULT_MAX_RANGE, DEFAULT_OUT_SIZE, project_points
from .simulate import (
    SimDetectorSpec,
    corpus_from_jsonl,
    default_depth_spec,
    default_rgb_spec,
    load_golden_corpus,
    simulate_detections,
)
from .uncertainty import correlation_from_triples, detection_triples, ece_curve
from .util import file_sha256, parallel_map

__all__ = ["main"]

_LEVELS = (0, 1, 2, 3, 4, 5)


def _env_seed() -> int:
    raw = os.environ.get("FUSELAGE_SEED", "")
    if not raw:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise FuselageError(f"FUSELAGE_SEED must be an integer, got {raw!r}")


def _resolve_common(args) -> tuple[int, int]:
    seed = args.seed if args.seed is not None else _env_seed()
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        raise FuselageError(f"--threads must be >= 1, got {threads}")
    return seed, threads


def _load_labels(spec: str) -> tuple[GroundTruthFrame, ...]:
    """Ground truth from a KITTI label dir, a corpus .jsonl, or 'golden'."""
    if spec == "golden":
        return load_golden_corpus()
    path = Path(spec)
    if path.is_dir():
        files = sorted(path.glob("*.txt"))
        if not files:
            raise FormatError(f"{path}: no label files (*.txt) found")
        return tuple(read_kitti_labels(p) for p in files)
    if not path.exists():
        raise FormatError(f"{path}: no such label source")
    return corpus_from_jsonl(path.read_text("utf-8"))


def _read_grouped(path, expect: Modality | None) -> dict[str, list]:
    records = read_detections(path)
    if expect is not None:
        for rec in records:
            if rec.box.modality is not expect:
                raise ParseError(
                    f"expected only {expect.value} records, found {rec.box.modality.value} "
                    f"in frame {rec.frame_id}",
                    path=str(path),
                )
    return group_detections(records)


def _write_manifest(path, entries: list[dict]) -> None:
    lines = [json.dumps(e, sort_keys=True) for e in entries]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _records_of(frame_id: str, dets: DetectionSet) -> list[DetectionRecord]:
    return [DetectionRecord(frame_id=frame_id, box=b) for b in dets.boxes]


def _gt_corners(gt: GroundTruthFrame):
    return [box for _, box in gt.objects]


def _gt_target(box) -> tuple[float, float, float, float]:
    return (
        (box.x_min + box.x_max) / 2.0,
        (box.y_min + box.y_max) / 2.0,
        box.x_max - box.x_min,
        box.y_max - box.y_min,
    )


# -- subcommands ------------------------------------------------------------

def _cmd_project(args) -> int:
    _, threads = _resolve_common(args)
    velo_dir, calib_dir, out_dir = Path(args.velodyne), Path(args.calib), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scans = sorted(velo_dir.glob("*.bin"))

    def one(scan: Path):
        calib_path = calib_dir / f"{scan.stem}.txt"
        if not calib_path.exists():
            raise FormatError(f"{scan}: missing calibration file {calib_path}")
        raster = project_points(
            read_velodyne(scan),
            read_calib(calib_path),
            out_size=(args.width, args.height),
            max_range=args.max_range,
        )
        return scan.stem, raster

    entries = []
    for stem, raster in parallel_map(one, scans, threads):
        out_path = out_dir / f"{stem}.pgm"
        write_pgm(out_path, raster)
        entries.append({"file": out_path.name, "frame_id": stem, "sha256": file_sha256(out_path)})
    _write_manifest(out_dir / "manifest.jsonl", entries)
    return 0


def _cmd_corrupt(args) -> int:
    seed, threads = _resolve_common(args)
    in_dir, out_dir = Path(args.indir), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = CorruptionKind(args.kind)
    spec = CorruptionSpec(kind=kind, level=args.level, seed=seed)
    sources = sorted(p for p in in_dir.iterdir() if p.suffix in (".pgm", ".ppm"))

    def one(src: Path):
        if args.level == 0:
            return src, None
        return src, corrupt(read_raster(src), spec, blur_angle_deg=args.blur_angle)

    entries = []
    for src, img in parallel_map(one, sources, threads):
        dst = out_dir / src.name
        if img is None:
            shutil.copyfile(src, dst)
        else:
            write_raster(dst, img)
        entries.append({
            "file": dst.name,
            "kind": kind.value,
            "level": args.level,
            "seed": seed,
            "sha256": file_sha256(dst),
        })
    _write_manifest(out_dir / "manifest.jsonl", entries)
    return 0


def _fusion_config(args, parser: argparse.ArgumentParser) -> FusionConfig:
    try:
        return FusionConfig(
            t1=args.t1,
            t2=args.t2,
            decay=Decay(args.decay),
            sigma_s=args.sigma_s,
            single_modal_nms_iou=args.single_modal_nms_iou,
            score_floor=args.score_floor,
            per_class=not args.single_class,
        )
    except ValueError as exc:
        parser.error(str(exc))


def _cmd_fuse(args, parser) -> int:
    _, threads = _resolve_common(args)
    cfg = _fusion_config(args, parser)
    rgb_frames = _read_grouped(args.rgb, Modality.RGB)
    depth_frames = _read_grouped(args.depth, Modality.DEPTH)
    frame_ids = sorted(set(rgb_frames) | set(depth_frames))

    def one(frame_id: str) -> DetectionSet:
        rgb = DetectionSet.from_boxes(rgb_frames.get(frame_id, ()))
        depth = DetectionSet.from_boxes(depth_frames.get(frame_id, ()))
        return multi_source_nms(rgb, depth, cfg)

    records = []
    for frame_id, fused in zip(frame_ids, parallel_map(one, frame_ids, threads)):
        records.extend(_records_of(frame_id, fused))
    write_detections(args.out, records)
    return 0


def _eval_rows(report) -> list[list[str]]:
    rows = [["class", "AP", "TP", "FP", "FN"]]
    for class_id in sorted(report.per_class):
        ce = report.per_class[class_id]
        rows.append([CLASS_NAMES[class_id], repr(ce.ap), str(ce.tp), str(ce.fp), str(ce.fn)])
    tp, fp, fn = report.counts
    rows.append(["mAP", repr(report.m_ap), str(tp), str(fp), str(fn)])
    return rows


def _cmd_eval(args) -> int:
    detections = _read_grouped(args.detections, None)
    gt_frames = {gt.frame_id: gt for gt in _load_labels(args.labels)}
    frame_ids = sorted(set(detections) | set(gt_frames))
    paired = [
        (
            detections.get(fid, []),
            gt_frames.get(fid, GroundTruthFrame(frame_id=fid, objects=())),
        )
        for fid in frame_ids
    ]
    report = evaluate_detections(paired, iou_gate=args.iou_gate)
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        csv.writer(f, lineterminator="\n").writerows(_eval_rows(report))
    return 0


def _parse_kinds(raw: str) -> tuple[CorruptionKind, ...]:
    try:
        return tuple(CorruptionKind(v) for v in raw.split(","))
    except ValueError:
        choices = ",".join(k.value for k in CorruptionKind)
        raise argparse.ArgumentTypeError(f"kinds must be drawn from {{{choices}}}, got {raw!r}")


def _parse_levels(raw: str) -> tuple[int, ...]:
    try:
        levels = tuple(int(v) for v in raw.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be integers, got {raw!r}")
    if any(lv not in (1, 2, 3, 4, 5) for lv in levels):
        raise argparse.ArgumentTypeError(f"levels must lie in 1..5, got {raw!r}")
    return levels


def _load_spec(path: str | None, fallback: SimDetectorSpec) -> SimDetectorSpec:
    if path is None:
        return fallback
    return SimDetectorSpec.from_json(Path(path).read_text("utf-8"))


def _dump_cell_detections(out_dir, corpus, spec, kind, level, kind_name, threads):
    cspec = CorruptionSpec(kind=kind, level=level, seed=0)
    sets = parallel_map(lambda gt: simulate_detections(gt, spec, cspec), corpus, threads)
    records = []
    for gt, dets in zip(corpus, sets):
        records.extend(_records_of(gt.frame_id, dets))
    write_detections(
        out_dir / f"det_{spec.modality.value}_{kind_name}_{level}.txt", records
    )


def _degradation_svgs(cells, out_dir) -> None:
    by_key = {(c.noise_kind, c.level, c.scenario): c.report.m_ap for c in cells}
    scenarios = sorted({c.scenario for c in cells})
    for kind in sorted({c.noise_kind for c in cells if c.noise_kind != "none"}):
        levels = sorted({c.level for c in cells if c.noise_kind == kind})
        if ("none", 0, scenarios[0]) in by_key:
            xs = [0] + levels
        else:
            xs = levels
        series = []
        for scenario in scenarios:
            ys = [
                by_key[("none", 0, scenario) if x == 0 else (kind, x, scenario)]
                for x in xs
            ]
            series.append((scenario, xs, ys))
        svg = line_chart_svg(
            series, title=f"mAP vs severity ({kind})", x_label="severity", y_label="mAP"
        )
        write_svg(out_dir / f"degradation_{kind}.svg", svg)


def _cmd_simulate(args) -> int:
    seed, threads = _resolve_common(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = _load_labels(args.labels)
    rgb_spec = _load_spec(args.rgb_spec, default_rgb_spec(seed))
    depth_spec = _load_spec(args.depth_spec, default_depth_spec(seed))
    cfg = FusionConfig()
    cells = run_degradation_grid(
        corpus,
        rgb_spec,
        depth_spec,
        cfg,
        kinds=args.kinds,
        levels=args.levels,
        include_clean=not args.no_clean,
        iou_gate=args.iou_gate,
        avg_seed=seed,
        threads=threads,
    )
    write_grid_csv(cells, out_dir / "grid.csv")
    if args.dump_detections:
        cell_keys = sorted({(c.noise_kind, c.level) for c in cells})
        for kind_name, level in cell_keys:
            kind = CorruptionKind.GAUSSIAN_NOISE if kind_name == "none" else CorruptionKind(kind_name)
            for spec in (rgb_spec, depth_spec):
                _dump_cell_detections(out_dir, corpus, spec, kind, level, kind_name, threads)
    if args.svg:
        _degradation_svgs(cells, out_dir)
    return 0


def _cmd_calibrate(args) -> int:
    detections = _read_grouped(args.detections, None)
    gt_frames = {gt.frame_id: gt for gt in _load_labels(args.labels)}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    paired = []
    triple_blocks = []
    n_dets = 0
    for fid in sorted(gt_frames):
        dets = detections.get(fid, [])
        gt = gt_frames[fid]
        n_dets += len(dets)
        if dets and gt.objects:
            triple_blocks.append(detection_triples(dets, _gt_corners(gt)))
        for det, gt_idx, _ in match_detections(dets, gt, iou_gate=args.iou_gate):
            if gt_idx is None:
                continue
            target = _gt_target(gt.objects[gt_idx][1])
            paired.append((det.variance, det.mean, np.array(target)))

    curve = ece_curve(paired)
    with open(out_dir / "calibration.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["expected", "observed", "count"])
        for expected, observed, count in curve.bins:
            w.writerow([repr(expected), repr(observed), str(count)])

    triples = np.vstack(triple_blocks) if triple_blocks else np.empty((0, 3))
    stats = correlation_from_triples(triples)
    with open(out_dir / "scatter.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iou", "mean_variance", "score"])
        for iou_v, var_v, score_v in triples:
            w.writerow([repr(float(iou_v)), repr(float(var_v)), repr(float(score_v))])

    def finite(v: float):
        return None if math.isnan(v) else v

    summary = {
        "ece": curve.ece,
        "n_matched": len(paired),
        "n_detections": n_dets,
        "iou_vs_variance": finite(stats.iou_vs_variance),
        "iou_vs_score": finite(stats.iou_vs_score),
        "variance_vs_score": finite(stats.variance_vs_score),
        "degenerate": list(stats.degenerate),
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    if args.svg:
        expected = [b[0] for b in curve.bins]
        observed = [b[1] for b in curve.bins]
        svg = line_chart_svg(
            [
                ("observed", expected, observed),
                ("ideal", [expected[0], expected[-1]], [expected[0], expected[-1]]),
            ],
            title="interval coverage",
            x_label="nominal level",
            y_label="observed frequency",
        )
        write_svg(out_dir / "calibration.svg", svg)
        points = [(float(r[0]), float(r[1])) for r in triples]
        write_svg(
            out_dir / "scatter_iou_variance.svg",
            scatter_svg(points, title="variance vs IoU", x_label="IoU", y_label="mean variance"),
        )
    return 0


# -- parser -----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuselage",
        description="Uncertainty-aware multi-source detection fusion pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument(
            "--seed", type=int, default=None,
            help="RNG seed (default: FUSELAGE_SEED env var, else 0)",
        )
        p.add_argument(
            "--threads", type=int, default=None,
            help="worker threads; results are identical for any value (default: all cores)",
        )

    p = sub.add_parser("project", help="project velodyne scans to 16-bit PGM depth rasters")
    p.add_argument("--velodyne", required=True, help="directory of *.bin scans")
    p.add_argument("--calib", required=True, help="directory of matching *.txt calibrations")
    p.add_argument("--out", required=True, help="output raster directory")
    p.add_argument("--width", type=int, default=DEFAULT_OUT_SIZE[0])
    p.add_argument("--height", type=int, default=DEFAULT_OUT_SIZE[1])
    p.add_argument("--max-range", type=float, default=DEFAULT_MAX_RANGE)
    common(p)

    p = sub.add_parser("corrupt", help="apply a corruption at a severity level to a raster dir")
    p.add_argument("--in", dest="indir", required=True, help="input raster directory")
    p.add_argument("--out", required=True, help="output raster directory")
    p.add_argument("--kind", required=True, choices=[k.value for k in CorruptionKind])
    p.add_argument("--level", type=int, required=True, choices=_LEVELS)
    p.add_argument("--blur-angle", type=float, default=0.0, help="motion blur angle in degrees")
    common(p)

    p = sub.add_parser("fuse", help="fuse RGB and depth detection files")
    p.add_argument("--rgb", required=True, help="RGB detections file")
    p.add_argument("--depth", required=True, help="depth detections file")
    p.add_argument("--out", required=True, help="fused detections file")
    p.add_argument("--t1", type=float, default=0.45, help="low IoU gate")
    p.add_argument("--t2", type=float, default=0.7, help="high IoU gate")
    p.add_argument("--decay", choices=[d.value for d in Decay], default=Decay.GAUSSIAN.value)
    p.add_argument("--sigma-s", type=float, default=0.5, help="gaussian decay bandwidth")
    p.add_argument("--single-modal-nms-iou", type=float, default=0.45)
    p.add_argument("--score-floor", type=float, default=0.01)
    p.add_argument("--single-class", action="store_true", help="suppress across class labels")
    common(p)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--labels", required=True, help="label dir, corpus .jsonl, or 'golden'")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--iou-gate", type=float, default=0.5)
    common(p)

    p = sub.add_parser("simulate", help="run the synthetic degradation grid")
    p.add_argument("--labels", required=True, help="label dir, corpus .jsonl, or 'golden'")
    p.add_argument("--out", required=True, help="output directory (grid.csv, optional dumps)")
    p.add_argument("--rgb-spec", default=None, help="JSON detector spec (default: built-in RGB)")
    p.add_argument("--depth-spec", default=None, help="JSON detector spec (default: built-in depth)")
    p.add_argument("--kinds", type=_parse_kinds, default=tuple(CorruptionKind),
                   help="comma-separated corruption kinds")
    p.add_argument("--levels", type=_parse_levels, default=(1, 2, 3, 4, 5),
                   help="comma-separated severities in 1..5")
    p.add_argument("--no-clean", action="store_true", help="skip the level-0 rows")
    p.add_argument("--iou-gate", type=float, default=0.5)
    p.add_argument("--dump-detections", action="store_true",
                   help="also write per-cell raw detection files")
    p.add_argument("--svg", action="store_true", help="render degradation curves as SVG")
    common(p)

    p = sub.add_parser("calibrate", help="calibration curve + uncertainty scatter for detections")
    p.add_argument("--detections", required=True)
    p.add_argument("--labels", required=True, help="label dir, corpus .jsonl, or 'golden'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iou-gate", type=float, default=0.5)
    p.add_argument("--svg", action="store_true", help="render curve and scatter as SVG")
    common(p)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "project":
            return _cmd_project(args)
        if args.command == "corrupt":
            return _cmd_corrupt(args)
        if args.command == "fuse":
            return _cmd_fuse(args, parser)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "calibrate":
            return _cmd_calibrate(args)
    except FuselageError as exc:
        print(f"fuselage: error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
