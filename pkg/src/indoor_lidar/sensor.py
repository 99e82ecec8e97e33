"""Spinning LiDAR model: scan patterns and full-revolution simulation."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numba import njit

from . import geometry as G
from .errors import InvalidArgumentError, PreconditionError
from .geometry import ROOM_SHELL_ID, T_MIN, Hit, Pose, Ray
from .rng import check_seed, ray_uniforms

WORKERS_ENV = "INDOOR_LIDAR_WORKERS"
_CHUNK = 4096


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SensorConfig:
    channels: int = 32
    vertical_fov: tuple = (math.radians(-22.5), math.radians(22.5))
    azimuth_step: float = math.radians(0.1)
    max_range: float = 50.0
    range_noise_sigma: float = 0.01
    dropout_probability: float = 0.0
    intensity_falloff_alpha: float = 0.001

    def __post_init__(self):
        if int(self.channels) != self.channels or self.channels < 1:
            raise InvalidArgumentError(f"channels must be a positive integer, got {self.channels}")
        lo, hi = (float(v) for v in self.vertical_fov)
        object.__setattr__(self, "vertical_fov", (lo, hi))
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi or (lo == hi and self.channels > 1):
            raise InvalidArgumentError(f"vertical_fov must satisfy min < max, got {self.vertical_fov}")
        if not 0.0 < self.azimuth_step < 2.0 * math.pi:
            raise InvalidArgumentError(f"azimuth_step must lie in (0, 2pi), got {self.azimuth_step}")
        if not (self.max_range > 0 and math.isfinite(self.max_range)):
            raise InvalidArgumentError(f"max_range must be positive, got {self.max_range}")
        if not self.range_noise_sigma >= 0:
            raise InvalidArgumentError("range_noise_sigma must be >= 0")
        if not 0.0 <= self.dropout_probability <= 1.0:
            raise InvalidArgumentError("dropout_probability must lie in [0, 1]")
        if not self.intensity_falloff_alpha >= 0:
            raise InvalidArgumentError("intensity_falloff_alpha must be >= 0")

    @property
    def azimuth_count(self) -> int:
        # guard against 2pi / (2pi / n) landing a hair above n
        return int(math.ceil(2.0 * math.pi / self.azimuth_step - 1e-9))

    @property
    def rays_per_frame(self) -> int:
        return self.channels * self.azimuth_count


@dataclass(frozen=True, eq=False)
class ScanPattern:
    """Ray angles, elevation-major: channel 0's full sweep, then channel 1, ..."""

    azimuth: np.ndarray
    elevation: np.ndarray

    def __len__(self):
        return len(self.azimuth)

    def directions(self) -> np.ndarray:
        return G.ray_directions(self.azimuth, self.elevation)


def build_scan_pattern(config: SensorConfig) -> ScanPattern:
    n_az = config.azimuth_count
    lo, hi = config.vertical_fov
    if config.channels == 1:
        elev = np.array([(lo + hi) / 2])
    else:
        k = np.arange(config.channels)
        elev = lo + k * (hi - lo) / (config.channels - 1)
    az = np.arange(n_az) * config.azimuth_step
    return ScanPattern(np.tile(az, config.channels), np.repeat(elev, n_az))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``points`` is ``(N, 4)`` float32 ``x, y, z, intensity`` in the sensor frame."""

    points: np.ndarray
    ray_index: np.ndarray = None
    timestamp_ns: int = 0

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float32).reshape(-1, 4)
        object.__setattr__(self, "points", pts)
        idx = np.arange(len(pts)) if self.ray_index is None else self.ray_index
        object.__setattr__(self, "ray_index", np.asarray(idx, dtype=np.int64))
        object.__setattr__(self, "timestamp_ns", int(self.timestamp_ns))

    def __len__(self):
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (np.array_equal(self.points, other.points) and np.array_equal(self.ray_index, other.ray_index)
                and self.timestamp_ns == other.timestamp_ns)


@dataclass(frozen=True, eq=False)
class ScanResult:
    """One simulated revolution.

    ``hits_per_object`` and ``shell_hits`` count emitted points;
    ``raw_hits_per_object`` counts returns before dropout and range gating.
    ``point_object_ids[i]`` is the object that produced point ``i``.
    """

    cloud: PointCloud
    hits_per_object: dict
    sensor_pose: Pose
    seed: int
    point_object_ids: np.ndarray
    shell_hits: int = 0
    raw_hits_per_object: dict = field(default_factory=dict)
    frame_id: int = 0


class RayStream(NamedTuple):
    """Coordinates of one ray's random substream."""

    seed: int
    frame_id: int
    ray_index: int


def shade_intensity(hit: Hit, ray: Ray, reflectivity: float, config: SensorConfig) -> float:
    """Lambertian return with inverse-square-style falloff, clamped to [0, 1]."""
    cos_term = max(0.0, -float(np.dot(hit.surface_normal, ray.direction)))
    value = reflectivity * cos_term / (1.0 + config.intensity_falloff_alpha * hit.range_t**2)
    return min(max(value, 0.0), 1.0)


@njit(cache=True, nogil=True)
def _perturb(clean, sigma, dropout, seed, frame_id, ray_index):
    u_drop, u1, u2 = ray_uniforms(seed, frame_id, ray_index)
    if u_drop < dropout:
        return -1.0
    if sigma == 0.0:
        return clean
    z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    return max(clean + sigma * z, T_MIN)


@njit(cache=True, nogil=True)
def _perturb_many(t, ray_ids, sigma, dropout, seed, frame_id, out):
    for j in range(len(ray_ids)):
        out[j] = _perturb(t[j], sigma, dropout, seed, frame_id, ray_ids[j])


def apply_noise(clean_range: float, config: SensorConfig, rng_state: RayStream) -> Optional[float]:
    """Dropout first, then additive Gaussian range noise; None when dropped."""
    if not clean_range > 0:
        raise InvalidArgumentError(f"clean_range must be positive, got {clean_range}")
    r = _perturb(float(clean_range), float(config.range_noise_sigma), float(config.dropout_probability),
                 np.uint64(check_seed(rng_state.seed)), np.uint64(rng_state.frame_id), np.uint64(rng_state.ray_index))
    return None if r < 0 else float(r)


def _shell_reflectivity(room, normals: np.ndarray) -> np.ndarray:
    nz = normals[:, 2]
    return np.where(nz > 0.5, room.floor_reflectivity,
                    np.where(nz < -0.5, room.ceiling_reflectivity, room.wall_reflectivity))


def simulate_scan(scene, sensor_pose: Pose, pattern: ScanPattern, config: SensorConfig, seed: int,
                  *, frame_id: int = 0, timestamp_ns: int = 0, workers: Optional[int] = None) -> ScanResult:
    """Cast every pattern ray from ``sensor_pose`` and build the frame's cloud.

    Rays are split into fixed chunks cast on a thread pool; each ray writes
    only its own output slot, and ray ``i`` draws noise from substream
    ``(seed, frame_id, i)``, so the result does not depend on ``workers``.
    """
    if scene.violations:
        raise PreconditionError(f"scene failed validation: {scene.violations[0].message}")
    seed = check_seed(seed)
    n = len(pattern)
    dirs_sensor = pattern.directions()
    dirs = np.ascontiguousarray(dirs_sensor @ sensor_pose.rotation.T)
    origins = np.broadcast_to(sensor_pose.translation, dirs.shape)
    origins = np.ascontiguousarray(origins)
    packed = scene.packed
    t = np.full(n, np.inf)
    idx = np.full(n, -1, np.int64)
    normal = np.zeros((n, 3))
    if len(packed.ids):
        workers = default_workers() if workers is None else max(1, int(workers))
        bounds = [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]
        out = (t, idx, normal)
        if workers == 1 or len(bounds) == 1:
            for s, e in bounds:
                G.cast(packed, origins, dirs, config.max_range, s, e, out)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(lambda b: G.cast(packed, origins, dirs, config.max_range, b[0], b[1], out), bounds))

    hit_rays = np.flatnonzero(idx >= 0)
    hit_idx = idx[hit_rays]
    hit_ids = packed.ids[hit_idx]
    raw_counts = _count_ids(hit_ids)

    noisy = np.empty(len(hit_rays))
    _perturb_many(t[hit_rays], hit_rays.astype(np.uint64), float(config.range_noise_sigma),
                  float(config.dropout_probability), np.uint64(seed), np.uint64(frame_id), noisy)
    keep = (noisy > 0) & (noisy <= config.max_range)
    rays = hit_rays[keep]
    ids = hit_ids[keep]
    rng_t = t[rays]

    refl = np.empty(len(rays))
    objects = scene.objects
    obj_refl = np.array([o.material_reflectivity for o in objects] + [0.0])
    pidx = hit_idx[keep]
    shell = ids == ROOM_SHELL_ID
    refl[~shell] = obj_refl[pidx[~shell]]
    refl[shell] = _shell_reflectivity(scene.room, normal[rays[shell]])
    cos_term = np.maximum(0.0, -np.einsum("ij,ij->i", normal[rays], dirs[rays]))
    intensity = np.clip(refl * cos_term / (1.0 + config.intensity_falloff_alpha * rng_t**2), 0.0, 1.0)

    xyz = dirs_sensor[rays] * noisy[keep][:, None]
    points = np.column_stack([xyz, intensity]).astype(np.float32)
    counts = _count_ids(ids)
    shell_hits = counts.pop(ROOM_SHELL_ID, 0)
    raw_counts.pop(ROOM_SHELL_ID, None)
    cloud = PointCloud(points, rays, timestamp_ns)
    return ScanResult(cloud, counts, sensor_pose, seed, ids, shell_hits, raw_counts, frame_id)


def _count_ids(ids: np.ndarray) -> dict:
    u, c = np.unique(ids, return_counts=True)
    return {int(a): int(b) for a, b in zip(u, c)}
