"""Batch workflows behind the command line: datasets, evaluation, statistics."""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import extract_annotations
from .config import RunConfig
from .errors import InvalidArgumentError, StorageError
from .evaluation import compute_report
from .rng import CounterRng
from .scene import generate_scene
from .sensor import build_scan_pattern, default_workers, simulate_scan
from .storage import (
    SPLITS,
    DatasetManifest,
    FrameRecord,
    format_frame_id,
    read_cloud,
    read_labels,
    read_manifest,
    read_scene,
    write_frame,
    write_manifest,
    write_scene,
)

log = logging.getLogger(__name__)

SCENE_SEED_STREAM = 0xD5


def sequence_name(index: int) -> str:
    return f"{index:04d}"


def assign_split(key: str, ratios: dict) -> str:
    """Deterministic split from the SHA-256 of ``<sequence>/<frame_id>``."""
    h = int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big") / 2**64
    acc = 0.0
    for name in SPLITS:
        acc += ratios.get(name, 0.0)
        if h < acc:
            return name
    return [s for s in SPLITS if ratios.get(s, 0.0) > 0][-1]


def scene_seeds(seed: int, count: int) -> list:
    rng = CounterRng(seed, SCENE_SEED_STREAM)
    return [rng.derive_seed() for _ in range(count)]


def build_dataset(cfg: RunConfig, root) -> DatasetManifest:
    """Generate ``num_scenes`` scenes and scan each along the trajectory.

    Frames of a scene are simulated on a pool of ``cfg.workers`` threads and
    written in frame order afterwards, so output bytes never depend on the
    worker count.
    """
    root = Path(root)
    if (root / "manifest.json").exists():
        raise StorageError(f"{root} already contains a dataset")
    v = cfg.values
    workers = cfg.workers or default_workers()
    pattern = build_scan_pattern(cfg.sensor)
    sequences, splits = {}, {s: [] for s in SPLITS}
    root.mkdir(parents=True, exist_ok=True)
    (root / "run_config.yaml").write_text(cfg.provenance_yaml(__version__), encoding="utf-8")

    for i, sseed in enumerate(scene_seeds(cfg.seed, int(v["num_scenes"]))):
        seq = sequence_name(i)
        scene = generate_scene(cfg.scene, sseed)
        if scene.violations:
            raise InvalidArgumentError(f"generated scene {seq} failed validation: {scene.violations[0].message}")
        write_scene(scene, root / seq / "scene.json")
        poses = cfg.sensor_poses(scene.room)

        def scan(k, scene=scene, poses=poses, sseed=sseed):
            ts = int(v["epoch_ns"]) + k * int(v["frame_period_ns"])
            result = simulate_scan(scene, poses[k], pattern, cfg.sensor, sseed,
                                   frame_id=k, timestamp_ns=ts, workers=1)
            return result, extract_annotations(scene, result, int(v["min_points"]))

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(scan, range(len(poses))))
        for k, (result, labels) in enumerate(results):
            fid = format_frame_id(k)
            write_frame(FrameRecord(seq, fid, result.cloud, labels, result.cloud.timestamp_ns, result.sensor_pose),
                        root)
            splits[assign_split(f"{seq}/{fid}", v["splits"])].append(f"{seq}/{fid}")
        sequences[seq] = len(poses)
        log.info("sequence %s: %d objects, %d frames", seq, len(scene.objects), len(poses))

    manifest = DatasetManifest(sequences, splits, cfg.scene.taxonomy,
                               extra={"tool_version": __version__, "seed": cfg.seed})
    write_manifest(manifest, root)
    return manifest


# --------------------------------------------------------------- evaluation

_NON_LABEL_FILES = {"times.txt", "poses.txt"}


def label_files(directory) -> dict:
    """Relative path -> file for every label text file below ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise StorageError(f"label directory {directory} does not exist")
    return {p.relative_to(directory).as_posix(): p for p in sorted(directory.rglob("*.txt"))
            if p.name not in _NON_LABEL_FILES}


def evaluate_dirs(gt_dir, det_dir, match_threshold: float = 0.25, class_aware: bool = True, classes=None):
    gts = label_files(gt_dir)
    if not gts:
        raise InvalidArgumentError(f"no label files found in {gt_dir}")
    dets_dir = Path(det_dir)
    if not dets_dir.is_dir():
        raise StorageError(f"detection directory {dets_dir} does not exist")
    frames = []
    for rel, path in gts.items():
        det_path = dets_dir / rel
        dets = read_labels(det_path) if det_path.exists() else []
        frames.append((read_labels(path), dets))
    return compute_report(frames, match_threshold, class_aware, classes)


# -------------------------------------------------------------------- info


def octant_coverage(xyz: np.ndarray) -> int:
    """Number of 45-degree azimuth sectors containing at least one point."""
    if len(xyz) == 0:
        return 0
    az = np.mod(np.arctan2(xyz[:, 1], xyz[:, 0]), 2 * math.pi)
    return len(np.unique(np.minimum((az // (math.pi / 4)).astype(int), 7)))


def dataset_info(root) -> dict:
    """Frame, class and point statistics of a dataset on disk."""
    root = Path(root)
    manifest = read_manifest(root)
    classes, frames, points, area = set(), 0, 0, 0.0
    full_coverage, intensity_ok = 0, True
    for seq in sorted(manifest.sequences):
        scene_path = root / seq / "scene.json"
        if scene_path.exists():
            scene = read_scene(scene_path)
            area += scene.room.width * scene.room.depth
        for bin_path in sorted((root / seq / "velodyne").glob("*.bin")):
            cloud = read_cloud(bin_path)
            frames += 1
            points += len(cloud)
            if octant_coverage(cloud.xyz) == 8:
                full_coverage += 1
            inten = cloud.intensity
            intensity_ok &= bool(np.all((inten >= 0) & (inten <= 1)))
            label_path = root / seq / "label_2" / (bin_path.stem + ".txt")
            if label_path.exists():
                classes.update(b.class_label for b in read_labels(label_path))
    return {
        "sequences": len(manifest.sequences),
        "frames": frames,
        "taxonomy_size": len(manifest.taxonomy),
        "classes_labeled": sorted(classes),
        "extent_m2": area,
        "points": points,
        "frames_full_360": full_coverage,
        "intensity": intensity_ok,
        "splits": {s: len(manifest.splits.get(s, [])) for s in SPLITS},
    }


def render_info(info: dict) -> str:
    head = ["Dataset", "Classes", "Extent (m^2)", "Points", "360°", "Intensity"]
    row = [
        "Sim",
        str(info["taxonomy_size"]),
        f"{info['extent_m2']:.0f}",
        str(info["points"]),
        "✓" if info["frames"] and info["frames_full_360"] == info["frames"] else "✗",
        "✓" if info["intensity"] else "✗",
    ]
    widths = [max(len(a), len(b)) + 2 for a, b in zip(head, row)]
    lines = ["".join(f"{h:<{w}}" for h, w in zip(head, widths)).rstrip(),
             "".join(f"{c:<{w}}" for c, w in zip(row, widths)).rstrip(),
             f"sequences: {info['sequences']}  frames: {info['frames']}  "
             f"labeled classes: {len(info['classes_labeled'])}  splits: {info['splits']}"]
    return "\n".join(lines) + "\n"
