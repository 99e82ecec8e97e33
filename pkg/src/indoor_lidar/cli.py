"""Command-line entry point: ``indoor-lidar <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .annotate import extract_annotations
from .bev import rasterize_bev, write_bev
from .config import resolve_run_config
from .errors import ConsistencyError, InvalidArgumentError, ParseError, PreconditionError, StorageError, ValidationError
from .geometry import Pose
from .pipeline import build_dataset, dataset_info, evaluate_dirs, render_info
from .scene import generate_scene
from .sensor import build_scan_pattern, simulate_scan
from .storage import FrameRecord, format_frame_id, read_cloud, read_scene, write_frame, write_scene

log = logging.getLogger("indoor_lidar")

MODULE_ERRORS = (InvalidArgumentError, PreconditionError, ConsistencyError, ParseError, StorageError,
                 ValidationError, OSError)


def _overrides(args) -> dict:
    out = {}
    for key in ("seed", "num_scenes", "frames_per_scene", "workers"):
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    return out


def cmd_generate_scene(args) -> int:
    cfg = resolve_run_config(args.config, _overrides(args))
    scene = generate_scene(cfg.scene, cfg.seed)
    write_scene(scene, args.out)
    print(f"wrote {args.out}: {len(scene.objects)} objects, {len(scene.generation_log)} dropped")
    return 0


def cmd_scan(args) -> int:
    cfg = resolve_run_config(args.config, _overrides(args))
    scene = read_scene(args.scene)
    x, y, z, yaw_deg = args.pose
    pose = Pose.from_yaw(math.radians(yaw_deg), (x, y, z))
    ts = int(cfg.values["epoch_ns"]) + args.frame * int(cfg.values["frame_period_ns"])
    result = simulate_scan(scene, pose, build_scan_pattern(cfg.sensor), cfg.sensor, cfg.seed,
                           frame_id=args.frame, timestamp_ns=ts, workers=cfg.workers)
    labels = extract_annotations(scene, result, int(cfg.values["min_points"]))
    fid = format_frame_id(args.frame)
    write_frame(FrameRecord(args.sequence, fid, result.cloud, labels, ts, pose), args.out)
    print(f"wrote {Path(args.out) / args.sequence / 'velodyne' / (fid + '.bin')}: "
          f"{len(result.cloud)} points, {len(labels)} boxes")
    return 0


def cmd_dataset(args) -> int:
    cfg = resolve_run_config(args.config, _overrides(args))
    manifest = build_dataset(cfg, args.out)
    total = sum(manifest.sequences.values())
    print(f"wrote {args.out}: {len(manifest.sequences)} sequences, {total} frames")
    return 0


def cmd_eval(args) -> int:
    report = evaluate_dirs(args.gt, args.det, args.threshold, not args.class_agnostic)
    problems = report.check_consistency()
    if problems:
        raise ConsistencyError(problems[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = report.render_table()
    (out / "report.txt").write_text(table, encoding="utf-8")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_bev(args) -> int:
    cloud = read_cloud(args.frame)
    grid = rasterize_bev(cloud, args.cell_size, tuple(args.extent))
    bin_path, _ = write_bev(grid, args.out)
    print(f"wrote {bin_path}: {grid.shape[0]}x{grid.shape[1]} cells, {grid.dropped} points outside extent")
    return 0


def cmd_info(args) -> int:
    info = dataset_info(args.root)
    if args.json:
        print(json.dumps(info, indent=1))
    else:
        sys.stdout.write(render_info(info))
    return 0


def _add_run_options(p, dataset: bool = False) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, help="worker threads (default: $INDOOR_LIDAR_WORKERS or CPU count)")
    if dataset:
        p.add_argument("--num-scenes", type=int)
        p.add_argument("--frames-per-scene", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="indoor-lidar", description="Synthetic indoor LiDAR datasets and benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-scene", help="sample a random room and write it as JSON")
    _add_run_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_scene)

    p = sub.add_parser("scan", help="simulate one frame from a scene file")
    _add_run_options(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--pose", nargs=4, type=float, required=True, metavar=("X", "Y", "Z", "YAW_DEG"))
    p.add_argument("--out", required=True, help="dataset root")
    p.add_argument("--sequence", default="0000")
    p.add_argument("--frame", type=int, default=0)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("dataset", help="generate scenes and scan them into a KITTI-style tree")
    _add_run_options(p, dataset=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("eval", help="score detections against ground-truth labels")
    p.add_argument("--gt", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.25)
    p.add_argument("--class-agnostic", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bev", help="rasterize a frame to a bird's-eye-view grid")
    p.add_argument("--frame", required=True)
    p.add_argument("--cell-size", type=float, default=0.1)
    p.add_argument("--extent", nargs=4, type=float, default=(-10.0, 10.0, -10.0, 10.0),
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_bev)

    p = sub.add_parser("info", help="summarize a dataset")
    p.add_argument("root")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_info)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except MODULE_ERRORS as exc:
        msg = " ".join(str(exc).split())
        print(f"indoor-lidar {args.command}: error: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
