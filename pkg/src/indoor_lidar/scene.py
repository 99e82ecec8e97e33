"""Procedural indoor scenes: a box-shaped room populated with classed objects."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .geometry import (
    ROOM_SHELL_ID,
    Box,
    Cylinder,
    Pose,
    Primitive,
    Sphere,
    TriangleMesh,
    pack_objects,
    world_aabb,
)
from .rng import CounterRng, check_seed

DEFAULT_TAXONOMY = (
    "Bed", "Sofa", "Couch", "Table", "Chair", "Stairs", "Cabinet", "Shelf", "Box", "Oven",
    "Microwave_oven", "Dishwasher", "Sink", "Person", "Door", "Window", "Lamp", "Desk",
    "Monitor", "Trashcan",
)
WALL_MOUNTED = frozenset({"Shelf", "Window", "Monitor"})
SHAPES = ("box", "sphere", "cylinder", "table", "chair", "sofa", "stairs")
REFLECTIVITY_RANGE = (0.05, 1.0)


# ------------------------------------------------------------------- meshes


def cuboid_mesh(parts) -> TriangleMesh:
    """Triangle mesh from a list of ``(lo, hi)`` axis-aligned cuboids."""
    corner = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                       [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float)
    faces = np.array([[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
                      [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]])
    verts, tris = [], []
    for lo, hi in parts:
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        tris.append(faces + 8 * len(verts))
        verts.append(lo + corner * (hi - lo))
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def furniture_mesh(shape: str, length: float, width: float, height: float) -> TriangleMesh:
    """Cuboid-assembled furniture whose tight bounding box is centred on the origin."""
    l2, w2, h2 = length / 2, width / 2, height / 2
    if shape in ("table", "chair"):
        leg = min(0.06, 0.15 * length, 0.15 * width)
        seat_top = h2 if shape == "table" else -h2 + 0.45 * height
        slab = max(0.03, 0.05 * height)
        parts = [((-l2, -w2, seat_top - slab), (l2, w2, seat_top))]
        for sx in (-1, 1):
            for sy in (-1, 1):
                x0 = l2 - leg if sx > 0 else -l2
                y0 = w2 - leg if sy > 0 else -w2
                parts.append(((x0, y0, -h2), (x0 + leg, y0 + leg, seat_top - slab)))
        if shape == "chair":
            back = max(0.03, 0.1 * length)
            parts.append(((-l2, -w2, seat_top), (-l2 + back, w2, h2)))
        return cuboid_mesh(parts)
    if shape == "sofa":
        base_top = -h2 + 0.45 * height
        back = 0.25 * width
        arm = 0.12 * length
        arm_top = -h2 + 0.7 * height
        return cuboid_mesh([
            ((-l2, -w2, -h2), (l2, w2, base_top)),
            ((-l2, w2 - back, base_top), (l2, w2, h2)),
            ((-l2, -w2, base_top), (-l2 + arm, w2 - back, arm_top)),
            ((l2 - arm, -w2, base_top), (l2, w2 - back, arm_top)),
        ])
    if shape == "stairs":
        n = max(3, int(round(height / 0.18)))
        parts = []
        for i in range(n):
            x0 = -l2 + i * length / n
            x1 = -l2 + (i + 1) * length / n
            parts.append(((x0, -w2, -h2), (x1, w2, -h2 + (i + 1) * height / n)))
        return cuboid_mesh(parts)
    raise InvalidArgumentError(f"unknown furniture shape {shape!r}")


def make_primitive(shape: str, length: float, width: float, height: float) -> Primitive:
    """Primitive of the given shape whose bounding box is ``length x width x height``.

    Spheres use ``length`` as diameter; cylinders use ``length`` as diameter and
    ``height`` as axis length.
    """
    if shape == "box":
        return Box((length / 2, width / 2, height / 2))
    if shape == "sphere":
        return Sphere(length / 2)
    if shape == "cylinder":
        return Cylinder(length / 2, height / 2)
    return furniture_mesh(shape, length, width, height)


# ------------------------------------------------------------------ configs


def _range(value, name, lower=None) -> tuple:
    lo, hi = value
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise InvalidArgumentError(f"{name}: range must be finite with min <= max, got {value}")
    if lower is not None and lo < lower:
        raise InvalidArgumentError(f"{name}: minimum must be >= {lower}, got {lo}")
    return (lo, hi)


@dataclass(frozen=True)
class ClassSpec:
    count: tuple = (0, 0)
    size: tuple = ((0.5, 0.5), (0.5, 0.5), (0.5, 0.5))
    shape: str = "box"
    reflectivity: tuple = (0.2, 0.8)
    mount: str = "floor"

    def __post_init__(self):
        lo, hi = self.count
        if int(lo) != lo or int(hi) != hi or lo < 0 or lo > hi:
            raise InvalidArgumentError(f"count range must be integers 0 <= min <= max, got {self.count}")
        object.__setattr__(self, "count", (int(lo), int(hi)))
        if len(self.size) != 3:
            raise InvalidArgumentError("size needs (length, width, height) ranges")
        sizes = tuple(tuple(float(v) for v in _range(r, "size")) for r in self.size)
        if any(r[0] <= 0 for r in sizes):
            raise InvalidArgumentError(f"sizes must be strictly positive, got {self.size}")
        object.__setattr__(self, "size", sizes)
        refl = _range(tuple(float(v) for v in self.reflectivity), "reflectivity")
        if refl[0] < REFLECTIVITY_RANGE[0] or refl[1] > REFLECTIVITY_RANGE[1]:
            raise InvalidArgumentError(f"reflectivity must lie in {REFLECTIVITY_RANGE}, got {refl}")
        object.__setattr__(self, "reflectivity", refl)
        if self.shape not in SHAPES:
            raise InvalidArgumentError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.mount not in ("floor", "wall"):
            raise InvalidArgumentError(f"mount must be 'floor' or 'wall', got {self.mount!r}")


@dataclass(frozen=True)
class SceneConfig:
    """Adjustable knobs of the generator.

    ``keep_out`` is a polyline in room-relative coordinates (fractions of width
    and depth); no object footprint may come within ``keep_out_clearance``
    metres of it. Used to keep the robot's path free.
    """

    room_width: tuple = (6.0, 10.0)
    room_depth: tuple = (6.0, 10.0)
    room_height: tuple = (2.6, 3.2)
    classes: dict = field(default_factory=dict)
    taxonomy: tuple = DEFAULT_TAXONOMY
    placement_tolerance: float = 0.0
    max_attempts: int = 1000
    mount_height: tuple = (0.8, 2.0)
    keep_out: tuple = ()
    keep_out_clearance: float = 0.0

    def __post_init__(self):
        for name in ("room_width", "room_depth", "room_height"):
            r = tuple(float(v) for v in _range(getattr(self, name), name))
            if r[0] <= 0:
                raise InvalidArgumentError(f"{name} must be strictly positive, got {r}")
            object.__setattr__(self, name, r)
        object.__setattr__(self, "taxonomy", tuple(self.taxonomy))
        if len(set(self.taxonomy)) != len(self.taxonomy):
            raise InvalidArgumentError("taxonomy contains duplicate classes")
        classes = {}
        for name, spec in self.classes.items():
            if name not in self.taxonomy:
                raise InvalidArgumentError(f"class {name!r} is not in the taxonomy")
            if not isinstance(spec, ClassSpec):
                spec = dict(spec)
                spec.setdefault("mount", "wall" if name in WALL_MOUNTED else "floor")
                spec = ClassSpec(**spec)
            classes[name] = spec
        object.__setattr__(self, "classes", classes)
        if not self.placement_tolerance >= 0:
            raise InvalidArgumentError("placement_tolerance must be >= 0")
        if int(self.max_attempts) < 1:
            raise InvalidArgumentError("max_attempts must be >= 1")
        _range(self.mount_height, "mount_height", lower=0.0)
        object.__setattr__(self, "keep_out", tuple(tuple(float(c) for c in p) for p in self.keep_out))
        if any(len(p) != 2 for p in self.keep_out):
            raise InvalidArgumentError("keep_out points must be (x_fraction, y_fraction)")
        if self.keep_out_clearance < 0:
            raise InvalidArgumentError("keep_out_clearance must be >= 0")


def default_class_specs() -> dict:
    """Size ranges (metres, length x width x height) for the default taxonomy."""

    def spec(count, length, width, height, shape="box", mount="floor", refl=(0.2, 0.8)):
        return ClassSpec(count, (length, width, height), shape, refl, mount)

    return {
        "Bed": spec((0, 1), (1.9, 2.2), (1.4, 1.8), (0.45, 0.6)),
        "Sofa": spec((0, 1), (1.8, 2.2), (0.8, 1.0), (0.8, 0.95), "sofa"),
        "Couch": spec((0, 1), (1.5, 2.0), (0.8, 0.95), (0.75, 0.9), "sofa"),
        "Table": spec((1, 2), (0.8, 1.8), (0.6, 1.0), (0.7, 0.78), "table"),
        "Chair": spec((1, 4), (0.42, 0.55), (0.42, 0.55), (0.8, 1.0), "chair"),
        "Stairs": spec((0, 1), (1.0, 2.0), (0.8, 1.2), (0.8, 1.6), "stairs", refl=(0.3, 0.6)),
        "Cabinet": spec((0, 2), (0.6, 1.2), (0.4, 0.6), (0.8, 2.0)),
        "Shelf": spec((0, 2), (0.6, 1.2), (0.25, 0.4), (0.3, 0.6), mount="wall"),
        "Box": spec((0, 3), (0.3, 0.6), (0.3, 0.6), (0.25, 0.5), refl=(0.3, 0.7)),
        "Oven": spec((0, 1), (0.55, 0.6), (0.55, 0.6), (0.8, 0.9), refl=(0.4, 0.9)),
        "Microwave_oven": spec((0, 1), (0.45, 0.55), (0.3, 0.4), (0.25, 0.32), refl=(0.4, 0.9)),
        "Dishwasher": spec((0, 1), (0.58, 0.6), (0.58, 0.6), (0.82, 0.86), refl=(0.4, 0.9)),
        "Sink": spec((0, 1), (0.5, 0.8), (0.4, 0.6), (0.8, 0.9), refl=(0.5, 1.0)),
        "Person": spec((0, 2), (0.4, 0.5), (0.4, 0.5), (1.5, 1.9), "cylinder", refl=(0.1, 0.5)),
        "Door": spec((0, 1), (0.8, 0.95), (0.04, 0.06), (2.0, 2.1)),
        "Window": spec((0, 1), (0.8, 1.5), (0.05, 0.1), (0.6, 1.0), mount="wall", refl=(0.05, 0.3)),
        "Lamp": spec((0, 1), (0.3, 0.5), (0.3, 0.5), (1.4, 1.8), "cylinder"),
        "Desk": spec((0, 1), (1.2, 1.6), (0.6, 0.8), (0.72, 0.76), "table"),
        "Monitor": spec((0, 1), (0.5, 0.7), (0.05, 0.2), (0.3, 0.45), mount="wall", refl=(0.05, 0.4)),
        "Trashcan": spec((0, 1), (0.25, 0.4), (0.25, 0.4), (0.3, 0.6), "cylinder"),
    }


def default_scene_config(**overrides) -> SceneConfig:
    overrides.setdefault("classes", default_class_specs())
    return SceneConfig(**overrides)


# ------------------------------------------------------------------- scenes


@dataclass(frozen=True)
class Room:
    """Axis-aligned room occupying ``[0, width] x [0, depth] x [0, height]``.

    With ``enclosed=False`` the walls, floor and ceiling are not ray-cast.
    """

    width: float
    depth: float
    height: float
    wall_reflectivity: float = 0.5
    floor_reflectivity: float = 0.3
    ceiling_reflectivity: float = 0.7
    enclosed: bool = True

    @property
    def shell_pose(self) -> Pose:
        return Pose(np.eye(3), (self.width / 2, self.depth / 2, self.height / 2))

    @property
    def shell(self) -> Box:
        return Box((self.width / 2, self.depth / 2, self.height / 2))


@dataclass(frozen=True)
class ObjectInstance:
    object_id: int
    class_label: str
    position: tuple
    yaw: float
    primitive: Primitive
    material_reflectivity: float

    @cached_property
    def pose(self) -> Pose:
        return Pose.from_yaw(self.yaw, self.position)

    def world_bounds(self):
        """World axis-aligned bounding box ``(lo, hi)``."""
        return world_aabb(self.primitive, self.pose)

    def box_dimensions(self) -> tuple:
        """Tight oriented box ``(length, width, height)`` in the object frame."""
        lo, hi = self.primitive.local_bounds()
        return tuple(float(v) for v in hi - lo)

    def box_center(self) -> np.ndarray:
        lo, hi = self.primitive.local_bounds()
        return self.pose.apply((lo + hi) / 2)


@dataclass(frozen=True)
class DropRecord:
    class_label: str
    instance: int
    attempts: int
    reason: str = "no overlap-free placement found"


@dataclass(frozen=True)
class Scene:
    room: Room
    objects: tuple
    seed: int
    taxonomy: tuple = DEFAULT_TAXONOMY
    placement_tolerance: float = 0.0
    generation_log: tuple = ()

    def object_by_id(self, object_id: int) -> Optional[ObjectInstance]:
        return self._index.get(object_id)

    @cached_property
    def _index(self) -> dict:
        return {o.object_id: o for o in self.objects}

    @cached_property
    def packed(self):
        items = [(o.object_id, o.primitive, o.pose) for o in self.objects]
        if self.room.enclosed:
            items.append((ROOM_SHELL_ID, self.room.shell, self.room.shell_pose))
        return pack_objects(items)

    @cached_property
    def violations(self) -> list:
        return validate_scene(self)


@dataclass(frozen=True)
class Violation:
    kind: str  # duplicate_id | overlap | out_of_room | unknown_class | reflectivity | room
    object_ids: tuple
    message: str


def _overlap_depths(a_lo, a_hi, b_lo, b_hi) -> np.ndarray:
    return np.minimum(a_hi, b_hi) - np.maximum(a_lo, b_lo)


def _inside_room(lo, hi, room: Room, eps: float = 1e-9) -> bool:
    top = np.array([room.width, room.depth, room.height])
    return bool(np.all(lo >= -eps) and np.all(hi <= top + eps))


def validate_scene(scene: Scene) -> list:
    """All invariant violations of ``scene``; empty iff the scene is valid."""
    out = []
    room = scene.room
    if not all(math.isfinite(v) and v > 0 for v in (room.width, room.depth, room.height)):
        out.append(Violation("room", (), f"room dimensions must be positive, got "
                                         f"{(room.width, room.depth, room.height)}"))
    seen = {}
    for o in scene.objects:
        if o.object_id in seen:
            out.append(Violation("duplicate_id", (o.object_id,), f"object id {o.object_id} appears more than once"))
        seen.setdefault(o.object_id, o)
        if o.class_label not in scene.taxonomy:
            out.append(Violation("unknown_class", (o.object_id,), f"class {o.class_label!r} not in taxonomy"))
        if not REFLECTIVITY_RANGE[0] <= o.material_reflectivity <= REFLECTIVITY_RANGE[1]:
            out.append(Violation("reflectivity", (o.object_id,),
                                 f"reflectivity {o.material_reflectivity} outside {REFLECTIVITY_RANGE}"))
    bounds = [o.world_bounds() for o in scene.objects]
    for o, (lo, hi) in zip(scene.objects, bounds):
        if not _inside_room(lo, hi, room):
            out.append(Violation("out_of_room", (o.object_id,), f"object {o.object_id} extends outside the room"))
    tol = scene.placement_tolerance
    for i in range(len(bounds)):
        for j in range(i + 1, len(bounds)):
            depth = _overlap_depths(*bounds[i], *bounds[j])
            if np.all(depth > tol):
                ids = (scene.objects[i].object_id, scene.objects[j].object_id)
                out.append(Violation("overlap", ids, f"objects {ids[0]} and {ids[1]} overlap"))
    return out


def _segment_hits_rect(p0, p1, lo, hi) -> bool:
    """2D segment/rectangle intersection by slab clipping."""
    t0, t1 = 0.0, 1.0
    for k in range(2):
        d = p1[k] - p0[k]
        if d == 0.0:
            if p0[k] < lo[k] or p0[k] > hi[k]:
                return False
            continue
        a = (lo[k] - p0[k]) / d
        b = (hi[k] - p0[k]) / d
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1:
            return False
    return True


def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """Sample a room and place objects by rejection sampling.

    Draw order is fixed (room, per-class counts in taxonomy order, then each
    object's size, reflectivity and placement attempts), so the result is a
    pure function of ``(config, seed)``. Objects that find no legal placement
    within ``config.max_attempts`` are dropped and logged.
    """
    if not isinstance(config, SceneConfig):
        raise InvalidArgumentError("config must be a SceneConfig")
    seed = check_seed(seed)
    rng = CounterRng(seed)
    room = Room(rng.uniform(*config.room_width), rng.uniform(*config.room_depth), rng.uniform(*config.room_height))
    counts = []
    for name in config.taxonomy:
        spec = config.classes.get(name)
        counts.append(rng.integer(*spec.count) if spec is not None else 0)

    keep_out = [np.array([fx * room.width, fy * room.depth]) for fx, fy in config.keep_out]
    clear = config.keep_out_clearance
    objects, log, placed = [], [], []
    tol = config.placement_tolerance
    for name, count in zip(config.taxonomy, counts):
        spec = config.classes.get(name)
        for instance in range(count):
            dims = [rng.uniform(*r) for r in spec.size]
            if spec.shape in ("sphere", "cylinder"):
                dims[1] = dims[0]
            if spec.shape == "sphere":
                dims[2] = dims[0]
            prim = make_primitive(spec.shape, *dims)
            refl = rng.uniform(*spec.reflectivity)
            lo_local, hi_local = prim.local_bounds()
            half_h = (hi_local[2] - lo_local[2]) / 2
            ok = False
            for _ in range(config.max_attempts):
                x = rng.uniform(0.0, room.width)
                y = rng.uniform(0.0, room.depth)
                yaw = rng.uniform(0.0, 2.0 * math.pi)
                if spec.mount == "wall":
                    z = rng.uniform(*config.mount_height) + half_h
                else:
                    z = half_h
                pose = Pose.from_yaw(yaw, (x, y, z))
                lo, hi = world_aabb(prim, pose)
                if not _inside_room(lo, hi, room, eps=0.0):
                    continue
                if any(np.all(_overlap_depths(lo, hi, plo, phi) > tol) for plo, phi in placed):
                    continue
                if keep_out:
                    elo, ehi = lo[:2] - clear, hi[:2] + clear
                    path = keep_out if len(keep_out) > 1 else keep_out * 2
                    if any(_segment_hits_rect(a, b, elo, ehi) for a, b in zip(path[:-1], path[1:])):
                        continue
                ok = True
                break
            if not ok:
                log.append(DropRecord(name, instance, config.max_attempts))
                continue
            placed.append((lo, hi))
            objects.append(ObjectInstance(len(objects), name, (float(x), float(y), float(z)), yaw, prim, refl))
    return Scene(room, tuple(objects), seed, config.taxonomy, tol, tuple(log))
