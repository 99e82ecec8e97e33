"""Run configuration: YAML/JSON file merged with command-line overrides."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import InvalidArgumentError
from .geometry import Pose, wrap_angle
from .scene import SceneConfig, default_class_specs
from .sensor import SensorConfig

DEFAULT_WAYPOINTS = ((0.3, 0.3, 0.0), (0.7, 0.3, math.pi / 2), (0.7, 0.7, math.pi), (0.3, 0.7, -math.pi / 2))

DEFAULTS = {
    "seed": 0,
    "num_scenes": 1,
    "frames_per_scene": 4,
    "min_points": 1,
    "epoch_ns": 1_700_000_000_000_000_000,
    "frame_period_ns": 100_000_000,
    "sensor_height": 0.6,
    "robot_clearance": 0.4,
    "splits": {"train": 0.70, "val": 0.15, "test": 0.15},
    "scene": {},
    "sensor": {},
    "trajectory": {"relative": True, "waypoints": [list(w) for w in DEFAULT_WAYPOINTS]},
}
# execution-only settings: never part of the provenance record
RUNTIME_KEYS = ("output_root", "workers")


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InvalidArgumentError(f"{path}: invalid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{path}: top level must be a mapping")
    return data


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("classes", "trajectory"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def sensor_config_from_dict(d: dict) -> SensorConfig:
    d = dict(d)
    if "vertical_fov_deg" in d:
        d["vertical_fov"] = tuple(math.radians(v) for v in d.pop("vertical_fov_deg"))
    if "azimuth_step_deg" in d:
        d["azimuth_step"] = math.radians(d.pop("azimuth_step_deg"))
    try:
        return SensorConfig(**d)
    except TypeError as exc:
        raise InvalidArgumentError(f"sensor config: {exc}") from None


def scene_config_from_dict(d: dict, keep_out=(), clearance: float = 0.0) -> SceneConfig:
    d = dict(d)
    if "classes" not in d:
        d["classes"] = default_class_specs()
    d.setdefault("keep_out", tuple(keep_out))
    d.setdefault("keep_out_clearance", clearance)
    try:
        return SceneConfig(**d)
    except TypeError as exc:
        raise InvalidArgumentError(f"scene config: {exc}") from None


def interpolate_waypoints(waypoints, count: int) -> list:
    """``count`` (x, y, yaw) samples along the waypoint polyline.

    Positions interpolate linearly per segment; yaw takes the shortest arc.
    """
    wp = np.asarray(waypoints, dtype=np.float64)
    if wp.ndim != 2 or wp.shape[1] != 3 or len(wp) < 1:
        raise InvalidArgumentError("waypoints must be a non-empty list of [x, y, yaw]")
    if count < 1:
        raise InvalidArgumentError("frame count must be >= 1")
    if len(wp) == 1 or count == 1:
        return [tuple(float(v) for v in wp[0])] * count
    out = []
    for k in range(count):
        s = k * (len(wp) - 1) / (count - 1)
        i = min(int(math.floor(s)), len(wp) - 2)
        u = s - i
        a, b = wp[i], wp[i + 1]
        xy = a[:2] + u * (b[:2] - a[:2])
        yaw = wrap_angle(a[2] + u * wrap_angle(b[2] - a[2]))
        out.append((float(xy[0]), float(xy[1]), yaw))
    return out


@dataclass
class RunConfig:
    """Fully resolved settings of a CLI run."""

    values: dict
    output_root: Optional[str] = None
    workers: Optional[int] = None
    scene: SceneConfig = field(init=False)
    sensor: SensorConfig = field(init=False)

    def __post_init__(self):
        v = self.values
        unknown = set(v) - set(DEFAULTS)
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        for key in ("num_scenes", "frames_per_scene", "min_points"):
            if int(v[key]) != v[key] or v[key] < 1:
                raise InvalidArgumentError(f"{key} must be a positive integer, got {v[key]!r}")
        splits = v["splits"]
        if set(splits) - {"train", "val", "test"} or abs(sum(splits.values()) - 1.0) > 1e-9 \
                or any(x < 0 for x in splits.values()):
            raise InvalidArgumentError(f"splits must be non-negative train/val/test fractions summing to 1, got {splits}")
        traj = v["trajectory"]
        if "poses" not in traj and "waypoints" not in traj:
            raise InvalidArgumentError("trajectory needs 'poses' or 'waypoints'")
        keep_out = ()
        if traj.get("relative", False) and "waypoints" in traj:
            keep_out = tuple((w[0], w[1]) for w in traj["waypoints"])
        self.scene = scene_config_from_dict(v["scene"], keep_out, float(v["robot_clearance"]))
        self.sensor = sensor_config_from_dict(v["sensor"])
        if "poses" in traj and len(traj["poses"]) != v["frames_per_scene"]:
            raise InvalidArgumentError("explicit trajectory poses must number frames_per_scene")

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def sensor_poses(self, room) -> list:
        """World sensor poses for one scene's frames."""
        v = self.values
        traj = v["trajectory"]
        if "poses" in traj:
            return [Pose.from_yaw(p[3], p[:3]) for p in traj["poses"]]
        samples = interpolate_waypoints(traj["waypoints"], int(v["frames_per_scene"]))
        h = float(v["sensor_height"])
        if traj.get("relative", False):
            return [Pose.from_yaw(yaw, (x * room.width, y * room.depth, h)) for x, y, yaw in samples]
        return [Pose.from_yaw(yaw, (x, y, h)) for x, y, yaw in samples]

    def provenance_yaml(self, tool_version: str) -> str:
        doc = {"tool_version": tool_version, **self.values}
        return yaml.safe_dump(doc, sort_keys=True, default_flow_style=None)


def resolve_run_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the config file, then explicit overrides."""
    data = load_yaml(path) if path else {}
    data.pop("tool_version", None)
    runtime = {k: data.pop(k) for k in RUNTIME_KEYS if k in data}
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k in RUNTIME_KEYS:
            runtime[k] = v
        else:
            data[k] = v
    values = _merge(DEFAULTS, data)
    return RunConfig(values, runtime.get("output_root"), runtime.get("workers"))
