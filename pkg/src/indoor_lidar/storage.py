"""On-disk dataset layout.

::

    <root>/manifest.json
    <root>/<sequence>/velodyne/<frame_id>.bin   N x 4 little-endian float32
    <root>/<sequence>/label_2/<frame_id>.txt    KITTI-style label lines
    <root>/<sequence>/times.txt                 "<frame_id> <timestamp_ns>"
    <root>/<sequence>/poses.txt                 row-major 3x4 sensor pose
    <root>/<sequence>/scene.json                scene description
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .annotate import format_label_file, parse_label_text
from .errors import ConflictError, CorruptFileError, ParseError, StorageError, TaxonomyError, ValidationError
from .geometry import Box, Cylinder, Pose, Sphere, TriangleMesh
from .scene import DropRecord, ObjectInstance, Room, Scene
from .sensor import PointCloud

FORMAT_VERSION = "1.0"
SCENE_FORMAT = "indoor-lidar-scene"
POINT_DTYPE = np.dtype("<f4")
FRAME_ID_WIDTH = 6

PathLike = Union[str, Path]


def format_frame_id(index: int) -> str:
    return f"{int(index):0{FRAME_ID_WIDTH}d}"


# -------------------------------------------------------------- point clouds


def write_cloud(cloud: PointCloud, path: PathLike) -> None:
    """N records of four little-endian float32 values, no header."""
    path = Path(path)
    data = np.ascontiguousarray(cloud.points, dtype=POINT_DTYPE)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data.tobytes())
    except OSError as exc:
        raise StorageError(f"cannot write point cloud {path}: {exc}") from exc


def read_cloud(path: PathLike) -> PointCloud:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read point cloud {path}: {exc}") from exc
    if len(raw) % 16:
        raise CorruptFileError(f"{path}: size {len(raw)} is not a multiple of 16 bytes")
    pts = np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, 4)
    bad = np.flatnonzero(~np.all(np.isfinite(pts), axis=1))
    if len(bad):
        raise ValidationError(f"{path}: non-finite values in points {bad.tolist()[:20]}")
    return PointCloud(pts.astype(np.float32))


# -------------------------------------------------------------------- frames


@dataclass(frozen=True)
class FrameRecord:
    sequence: str
    frame_id: str
    cloud: PointCloud
    labels: list
    timestamp_ns: int
    sensor_pose: Pose


_locks: dict = {}
_locks_guard = threading.Lock()


def _sequence_lock(path: Path) -> threading.Lock:
    key = str(path.resolve())
    with _locks_guard:
        return _locks.setdefault(key, threading.Lock())


def _pose_line(pose: Pose) -> str:
    return " ".join(repr(float(v)) for v in pose.matrix().reshape(-1))


def write_frame(record: FrameRecord, dataset_root: PathLike) -> None:
    """Write one frame's cloud and labels and append its time and pose."""
    seq_dir = Path(dataset_root) / record.sequence
    ts = record.timestamp_ns
    if int(ts) != ts or ts < 0 or ts >= 2**64:
        raise ValidationError(f"timestamp must be an unsigned 64-bit integer of nanoseconds, got {ts!r}")
    bin_path = seq_dir / "velodyne" / f"{record.frame_id}.bin"
    label_path = seq_dir / "label_2" / f"{record.frame_id}.txt"
    with _sequence_lock(seq_dir):
        times = read_times(seq_dir) if (seq_dir / "times.txt").exists() else []
        if bin_path.exists() or label_path.exists() or any(fid == record.frame_id for fid, _ in times):
            raise ConflictError(f"frame {record.frame_id} already exists in {seq_dir}")
        if times and times[-1][1] >= ts:
            raise ValidationError(f"timestamp {ts} is not after the previous frame's {times[-1][1]}")
        write_cloud(record.cloud, bin_path)
        try:
            label_path.parent.mkdir(parents=True, exist_ok=True)
            label_path.write_text(format_label_file(record.labels), encoding="utf-8")
            with open(seq_dir / "times.txt", "a", encoding="utf-8") as fh:
                fh.write(f"{record.frame_id} {int(ts)}\n")
            with open(seq_dir / "poses.txt", "a", encoding="utf-8") as fh:
                fh.write(_pose_line(record.sensor_pose) + "\n")
        except OSError as exc:
            raise StorageError(f"cannot write frame {record.frame_id} under {seq_dir}: {exc}") from exc


def read_times(seq_dir: PathLike) -> list:
    path = Path(seq_dir) / "times.txt"
    out = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split()
        if len(parts) != 2 or not parts[1].isdigit():
            raise ParseError(f"{path}: expected '<frame_id> <timestamp_ns>'", line=n)
        out.append((parts[0], int(parts[1])))
    return out


def read_poses(seq_dir: PathLike) -> list:
    path = Path(seq_dir) / "poses.txt"
    poses = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        try:
            vals = [float(v) for v in line.split()]
        except ValueError:
            raise ParseError(f"{path}: non-numeric pose value", line=n) from None
        if len(vals) != 12:
            raise ParseError(f"{path}: expected 12 values, got {len(vals)}", line=n)
        poses.append(Pose.from_matrix(np.array(vals).reshape(3, 4)))
    return poses


def read_labels(path: PathLike) -> list:
    path = Path(path)
    try:
        return parse_label_text(path.read_text(encoding="utf-8"))
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


# -------------------------------------------------------------------- scenes


def _primitive_to_dict(p) -> dict:
    if isinstance(p, Box):
        return {"type": "box", "half_extents": list(p.half_extents)}
    if isinstance(p, Sphere):
        return {"type": "sphere", "radius": p.radius}
    if isinstance(p, Cylinder):
        return {"type": "cylinder", "radius": p.radius, "half_height": p.half_height}
    return {"type": "mesh", "vertices": p.vertices.tolist(), "triangles": p.triangles.tolist()}


def scene_to_dict(scene: Scene) -> dict:
    r = scene.room
    return {
        "format": SCENE_FORMAT,
        "version": FORMAT_VERSION,
        "seed": scene.seed,
        "taxonomy": list(scene.taxonomy),
        "placement_tolerance": scene.placement_tolerance,
        "room": {
            "width": r.width, "depth": r.depth, "height": r.height,
            "wall_reflectivity": r.wall_reflectivity,
            "floor_reflectivity": r.floor_reflectivity,
            "ceiling_reflectivity": r.ceiling_reflectivity,
            "enclosed": r.enclosed,
        },
        "objects": [
            {
                "id": o.object_id,
                "class": o.class_label,
                "position": list(o.position),
                "yaw": o.yaw,
                "reflectivity": o.material_reflectivity,
                "primitive": _primitive_to_dict(o.primitive),
            }
            for o in scene.objects
        ],
        "generation_log": [
            {"class": d.class_label, "instance": d.instance, "attempts": d.attempts, "reason": d.reason}
            for d in scene.generation_log
        ],
    }


class _Reader:
    """Typed field access that reports the JSON path of any schema violation."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, msg: str, cls=ParseError):
        raise cls(f"{self.source}: {where}: {msg}")

    def get(self, d, key, where, kind):
        if not isinstance(d, dict) or key not in d:
            self.fail(where, f"missing field {key!r}")
        v = d[key]
        loc = f"{where}.{key}"
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                self.fail(loc, f"expected a finite number, got {v!r}")
            return float(v)
        if kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(loc, f"expected an integer, got {v!r}")
            return v
        if not isinstance(v, kind):
            self.fail(loc, f"expected {kind.__name__}, got {type(v).__name__}")
        return v


def scene_from_dict(data: dict, source: str = "<scene>") -> Scene:
    rd = _Reader(source)
    if not isinstance(data, dict) or data.get("format") != SCENE_FORMAT:
        rd.fail("$", f"not a {SCENE_FORMAT} document")
    taxonomy = tuple(rd.get(data, "taxonomy", "$", list))
    if not all(isinstance(c, str) for c in taxonomy):
        rd.fail("$.taxonomy", "class names must be strings")
    seed = rd.get(data, "seed", "$", int)
    room_d = rd.get(data, "room", "$", dict)
    room = Room(
        *(rd.get(room_d, k, "$.room", float) for k in ("width", "depth", "height")),
        *(rd.get(room_d, k, "$.room", float)
          for k in ("wall_reflectivity", "floor_reflectivity", "ceiling_reflectivity")),
        enclosed=rd.get(room_d, "enclosed", "$.room", bool),
    )
    objects = []
    for i, od in enumerate(rd.get(data, "objects", "$", list)):
        where = f"$.objects[{i}]"
        cls = rd.get(od, "class", where, str)
        if cls not in taxonomy:
            rd.fail(where, f"class {cls!r} is not in the taxonomy", TaxonomyError)
        pos = rd.get(od, "position", where, list)
        if len(pos) != 3:
            rd.fail(f"{where}.position", "expected 3 coordinates")
        pos = tuple(rd.get({"v": v}, "v", f"{where}.position[{k}]", float) for k, v in enumerate(pos))
        pd = rd.get(od, "primitive", where, dict)
        pwhere = f"{where}.primitive"
        kind = rd.get(pd, "type", pwhere, str)
        try:
            if kind == "box":
                prim = Box(tuple(rd.get(pd, "half_extents", pwhere, list)))
            elif kind == "sphere":
                prim = Sphere(rd.get(pd, "radius", pwhere, float))
            elif kind == "cylinder":
                prim = Cylinder(rd.get(pd, "radius", pwhere, float), rd.get(pd, "half_height", pwhere, float))
            elif kind == "mesh":
                prim = TriangleMesh(np.array(rd.get(pd, "vertices", pwhere, list), dtype=np.float64),
                                    np.array(rd.get(pd, "triangles", pwhere, list), dtype=np.int64))
            else:
                rd.fail(f"{pwhere}.type", f"unknown primitive type {kind!r}")
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ParseError):
                raise
            rd.fail(pwhere, str(exc))
        objects.append(ObjectInstance(rd.get(od, "id", where, int), cls, pos, rd.get(od, "yaw", where, float),
                                      prim, rd.get(od, "reflectivity", where, float)))
    log = []
    for i, ld in enumerate(data.get("generation_log", [])):
        where = f"$.generation_log[{i}]"
        log.append(DropRecord(rd.get(ld, "class", where, str), rd.get(ld, "instance", where, int),
                              rd.get(ld, "attempts", where, int), rd.get(ld, "reason", where, str)))
    tol = rd.get(data, "placement_tolerance", "$", float) if "placement_tolerance" in data else 0.0
    return Scene(room, tuple(objects), seed, taxonomy, tol, tuple(log))


def write_scene(scene: Scene, path: PathLike) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(scene_to_dict(scene), indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write scene {path}: {exc}") from exc


def read_scene(path: PathLike) -> Scene:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read scene {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}", line=exc.lineno) from None
    return scene_from_dict(data, str(path))


# ------------------------------------------------------------------ manifest

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetManifest:
    sequences: dict          # name -> frame count
    splits: dict             # split -> list of "<sequence>/<frame_id>"
    taxonomy: tuple
    format_version: str = FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        frames = [f for s in SPLITS for f in self.splits.get(s, [])]
        if set(self.splits) - set(SPLITS):
            raise ValidationError(f"unknown split names {sorted(set(self.splits) - set(SPLITS))}")
        if len(frames) != len(set(frames)):
            raise ValidationError("splits are not disjoint")
        if len(frames) != sum(self.sequences.values()):
            raise ValidationError("splits do not cover every frame exactly once")


def write_manifest(manifest: DatasetManifest, root: PathLike) -> None:
    doc = {
        "format_version": manifest.format_version,
        "taxonomy": list(manifest.taxonomy),
        "sequences": dict(sorted(manifest.sequences.items())),
        "splits": {s: sorted(manifest.splits.get(s, [])) for s in SPLITS},
        **manifest.extra,
    }
    path = Path(root) / "manifest.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write manifest {path}: {exc}") from exc


def read_manifest(root: PathLike) -> DatasetManifest:
    path = Path(root) / "manifest.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise StorageError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}", line=exc.lineno) from None
    known = {"format_version", "taxonomy", "sequences", "splits"}
    return DatasetManifest(doc["sequences"], doc["splits"], tuple(doc["taxonomy"]), doc["format_version"],
                           {k: v for k, v in doc.items() if k not in known})
