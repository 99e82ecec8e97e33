"""Shared builders for randomized test inputs."""

import hashlib
import math
from pathlib import Path

import numpy as np

from indoor_lidar.geometry import Box, Cylinder, Sphere
from indoor_lidar.scene import ClassSpec, ObjectInstance, Room, Scene, SceneConfig, furniture_mesh


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_primitive(rng):
    kind = rng.integers(0, 4)
    if kind == 0:
        return Box(tuple(rng.uniform(0.05, 0.8, 3)))
    if kind == 1:
        return Sphere(float(rng.uniform(0.05, 0.6)))
    if kind == 2:
        return Cylinder(float(rng.uniform(0.05, 0.5)), float(rng.uniform(0.05, 0.9)))
    shape = ("table", "chair", "sofa", "stairs")[rng.integers(0, 4)]
    return furniture_mesh(shape, *rng.uniform(0.4, 1.8, 3))


def random_scene(rng, n_objects, enclosed=True) -> Scene:
    """Objects scattered at random; overlaps are allowed."""
    room = Room(*rng.uniform(4.0, 12.0, 2), float(rng.uniform(2.5, 3.5)), enclosed=enclosed)
    objs = []
    for i in range(n_objects):
        pos = (rng.uniform(0, room.width), rng.uniform(0, room.depth), rng.uniform(0.1, room.height - 0.1))
        objs.append(ObjectInstance(i, "Box", tuple(float(v) for v in pos), float(rng.uniform(-math.pi, math.pi)),
                                   random_primitive(rng), float(rng.uniform(0.1, 0.9))))
    return Scene(room, tuple(objs), 0)


def fifty_object_config() -> SceneConfig:
    """A large room with exactly 50 requested objects across several shapes."""
    def spec(n, l, w, h, shape="box"):
        return ClassSpec((n, n), ((l, l * 1.2), (w, w * 1.2), (h, h * 1.2)), shape)

    return SceneConfig(
        room_width=(14.0, 14.0), room_depth=(12.0, 12.0), room_height=(3.0, 3.0),
        classes={
            "Table": spec(6, 1.0, 0.7, 0.75, "table"),
            "Chair": spec(14, 0.45, 0.45, 0.9, "chair"),
            "Sofa": spec(3, 1.8, 0.85, 0.85, "sofa"),
            "Cabinet": spec(8, 0.8, 0.45, 1.2),
            "Box": spec(8, 0.4, 0.4, 0.35),
            "Person": spec(5, 0.45, 0.45, 1.7, "cylinder"),
            "Stairs": spec(2, 1.2, 0.9, 1.0, "stairs"),
            "Trashcan": spec(4, 0.3, 0.3, 0.4, "cylinder"),
        },
        keep_out=((0.5, 0.5),), keep_out_clearance=0.6,
    )


def tree_digest(root) -> dict:
    """Relative path -> SHA-256 for every file below ``root``."""
    root = Path(root)
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}
