"""Ground-truth boxes and the KITTI-style label codec.

Labels live in the LiDAR (sensor) frame, not KITTI's camera frame:
``x, y, z`` is the box centre in the sensor frame and ``rotation_y`` is the
yaw about the sensor's vertical axis. Camera-only columns carry sentinels.
On disk dimensions are ``height width length``; in memory they are
``(length, width, height)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConsistencyError, InvalidArgumentError, ParseError
from .geometry import wrap_angle

TRUNCATED = "0.00"
OCCLUDED = "0"
ALPHA = -10.0
BBOX_2D = ("-1", "-1", "-1", "-1")


def _check_geometry(dimensions, yaw):
    if len(dimensions) != 3 or not all(math.isfinite(d) and d > 0 for d in dimensions):
        raise InvalidArgumentError(f"box dimensions must be finite and positive, got {dimensions}")
    if not math.isfinite(yaw):
        raise InvalidArgumentError(f"yaw must be finite, got {yaw}")


@dataclass(frozen=True)
class LabeledBox:
    """Oriented box; ``score`` is set for detections and None for ground truth."""

    class_label: str
    center: tuple
    dimensions: tuple
    yaw: float
    score: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "dimensions", tuple(float(v) for v in self.dimensions))
        _check_geometry(self.dimensions, self.yaw)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass(frozen=True)
class GtBox:
    class_label: str
    center: tuple
    dimensions: tuple
    yaw: float
    point_count: int
    object_id: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "dimensions", tuple(float(v) for v in self.dimensions))
        _check_geometry(self.dimensions, self.yaw)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def score(self):
        return None

    def to_labeled(self) -> LabeledBox:
        return LabeledBox(self.class_label, self.center, self.dimensions, self.yaw)


def box_corners(box) -> np.ndarray:
    """The 8 corners ``(8, 3)`` of an oriented box."""
    l, w, h = box.dimensions
    sx = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * l / 2
    sy = np.array([1, -1, -1, 1, 1, -1, -1, 1]) * w / 2
    sz = np.array([1, 1, 1, 1, -1, -1, -1, -1]) * h / 2
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    x = c * sx - s * sy + box.center[0]
    y = s * sx + c * sy + box.center[1]
    return np.stack([x, y, sz + box.center[2]], axis=1)


def points_in_box(box, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """Boolean mask of ``points`` (N, >=3) inside ``box`` grown by ``margin``."""
    p = np.asarray(points, dtype=np.float64)[:, :3] - np.asarray(box.center)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    lx = c * p[:, 0] + s * p[:, 1]
    ly = -s * p[:, 0] + c * p[:, 1]
    half = np.asarray(box.dimensions) / 2 + margin
    return (np.abs(lx) <= half[0]) & (np.abs(ly) <= half[1]) & (np.abs(p[:, 2]) <= half[2])


def extract_annotations(scene, result, min_points: int = 1) -> list:
    """Boxes of every object that received at least ``min_points`` points.

    Geometry is the object's tight oriented box, expressed in the sensor frame.
    Requires the sensor's rotation to differ from each object's by a yaw
    only, so the box stays upright in the sensor frame.
    """
    if min_points < 1:
        raise InvalidArgumentError(f"min_points must be >= 1, got {min_points}")
    unknown = [oid for oid in result.hits_per_object if scene.object_by_id(oid) is None]
    if unknown:
        raise ConsistencyError(f"scan result references objects not in the scene: {sorted(unknown)}")
    sensor = result.sensor_pose
    boxes = []
    for oid in sorted(result.hits_per_object):
        count = result.hits_per_object[oid]
        if count < min_points:
            continue
        obj = scene.object_by_id(oid)
        rel = sensor.rotation.T @ obj.pose.rotation
        if abs(rel[2, 2] - 1.0) > 1e-9:
            raise ConsistencyError(f"object {oid} is not upright in the sensor frame")
        center = sensor.apply_inverse(obj.box_center())
        yaw = math.atan2(rel[1, 0], rel[0, 0])
        boxes.append(GtBox(obj.class_label, center, obj.box_dimensions(), yaw, count, oid))
    return boxes


# -------------------------------------------------------------------- codec


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def format_kitti_line(box: Union[GtBox, LabeledBox]) -> str:
    """One label line: 15 fields, plus a trailing score for detections."""
    label = box.class_label
    if not label or any(ch.isspace() for ch in label):
        raise InvalidArgumentError(f"class label must be a non-empty token without whitespace, got {label!r}")
    l, w, h = box.dimensions
    x, y, z = box.center
    fields = [label, TRUNCATED, OCCLUDED, _fmt(ALPHA), *BBOX_2D,
              _fmt(h), _fmt(w), _fmt(l), _fmt(x), _fmt(y), _fmt(z), _fmt(box.yaw)]
    if box.score is not None:
        fields.append(_fmt(box.score))
    return " ".join(fields)


def parse_kitti_line(line: str, line_number: Optional[int] = None) -> LabeledBox:
    fields = line.split()
    if len(fields) not in (15, 16):
        raise ParseError(f"expected 15 or 16 fields, got {len(fields)}", line=line_number)
    values = []
    for i in range(1, len(fields)):
        try:
            v = float(fields[i])
        except ValueError:
            raise ParseError(f"non-numeric value {fields[i]!r}", line=line_number, field=i + 1) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite value {fields[i]!r}", line=line_number, field=i + 1)
        values.append(v)
    h, w, l, x, y, z, ry = values[7:14]
    score = values[14] if len(fields) == 16 else None
    try:
        return LabeledBox(fields[0], (x, y, z), (l, w, h), ry, score)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), line=line_number) from None


def format_label_file(boxes) -> str:
    return "".join(format_kitti_line(b) + "\n" for b in boxes)


def parse_label_text(text: str) -> list:
    return [parse_kitti_line(line, i) for i, line in enumerate(text.splitlines(), start=1) if line.strip()]
