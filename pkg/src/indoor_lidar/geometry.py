"""Rigid poses, rays, primitives and analytic ray casting.

Vectors are plain ``numpy`` arrays of shape ``(3,)``. Primitives are defined
in their own local frame, centred on the origin; a :class:`Pose` places them
in the world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import InvalidArgumentError

T_MIN = K.T_MIN
ROOM_SHELL_ID = -1


def _vec3(v, name="vector") -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape != (3,):
        raise InvalidArgumentError(f"{name} must have 3 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite, got {a}")
    return a


def rotation_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(angle: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.remainder(float(angle), 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping local coordinates to world: ``p_w = R p + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        if R.shape != (3, 3) or not np.all(np.isfinite(R)):
            raise InvalidArgumentError("rotation must be a finite 3x3 matrix")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise InvalidArgumentError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", _vec3(self.translation, "translation"))
        R.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(rotation_z(yaw), translation)

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def matrix(self) -> np.ndarray:
        """Row-major 3x4 ``[R | t]``."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def apply_inverse(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -(Rt @ self.translation))

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``: apply ``other`` first, then ``self``."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __repr__(self):
        return f"Pose(yaw={self.yaw:.6f}, translation={self.translation.tolist()})"


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = _vec3(self.origin, "ray origin")
        d = _vec3(self.direction, "ray direction")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise InvalidArgumentError(f"ray direction must be unit length, got norm {np.linalg.norm(d)}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Hit:
    range_t: float
    object_id: int
    surface_normal: np.ndarray = field(compare=False)
    hit_point: np.ndarray = field(compare=False)


def ray_direction(azimuth: float, elevation: float) -> np.ndarray:
    """Unit direction ``[cos(el) cos(az), cos(el) sin(az), sin(el)]``."""
    if not (math.isfinite(azimuth) and math.isfinite(elevation)):
        raise InvalidArgumentError(f"angles must be finite, got ({azimuth}, {elevation})")
    ce = math.cos(elevation)
    return np.array([ce * math.cos(azimuth), ce * math.sin(azimuth), math.sin(elevation)])


def ray_directions(azimuth: np.ndarray, elevation: np.ndarray) -> np.ndarray:
    """Vectorized :func:`ray_direction`, shape ``(N, 3)``."""
    az = np.asarray(azimuth, dtype=np.float64)
    el = np.asarray(elevation, dtype=np.float64)
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def to_local_frame(ray: Ray, pose: Pose) -> Ray:
    """Express a world ray in the frame of ``pose``; ranges are preserved."""
    v = K.to_local(pose.rotation, pose.translation, *ray.origin, *ray.direction)
    d = np.array(v[3:])
    # re-normalize only against accumulated rounding; R is orthonormal
    return Ray(np.array(v[:3]), d)


# ---------------------------------------------------------------- primitives


def _positive(value: float, name: str) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise InvalidArgumentError(f"{name} must be finite and strictly positive, got {value}")
    return value


@dataclass(frozen=True)
class Box:
    half_extents: tuple

    kind = K.KIND_BOX

    def __post_init__(self):
        h = tuple(_positive(v, "box half-extent") for v in self.half_extents)
        if len(h) != 3:
            raise InvalidArgumentError("box needs 3 half-extents")
        object.__setattr__(self, "half_extents", h)

    def params(self) -> np.ndarray:
        return np.array([*self.half_extents, 0.0])

    def local_bounds(self):
        h = np.array(self.half_extents)
        return -h, h

    def world_half_extents(self, rotation: np.ndarray) -> np.ndarray:
        return np.abs(rotation) @ np.array(self.half_extents)

    def contains(self, p: np.ndarray) -> np.ndarray:
        return np.all(np.abs(p) <= np.array(self.half_extents), axis=-1)


@dataclass(frozen=True)
class Sphere:
    radius: float

    kind = K.KIND_SPHERE

    def __post_init__(self):
        object.__setattr__(self, "radius", _positive(self.radius, "sphere radius"))

    def params(self) -> np.ndarray:
        return np.array([self.radius, 0.0, 0.0, 0.0])

    def local_bounds(self):
        h = np.full(3, self.radius)
        return -h, h

    def world_half_extents(self, rotation: np.ndarray) -> np.ndarray:
        return np.full(3, self.radius)

    def contains(self, p: np.ndarray) -> np.ndarray:
        return np.sum(np.square(p), axis=-1) <= self.radius**2


@dataclass(frozen=True)
class Cylinder:
    """Solid cylinder along local z, capped at ``z = +-half_height``."""

    radius: float
    half_height: float

    kind = K.KIND_CYLINDER

    def __post_init__(self):
        object.__setattr__(self, "radius", _positive(self.radius, "cylinder radius"))
        object.__setattr__(self, "half_height", _positive(self.half_height, "cylinder half-height"))

    def params(self) -> np.ndarray:
        return np.array([self.radius, self.half_height, 0.0, 0.0])

    def local_bounds(self):
        h = np.array([self.radius, self.radius, self.half_height])
        return -h, h

    def world_half_extents(self, rotation: np.ndarray) -> np.ndarray:
        axis = rotation[:, 2]
        return self.half_height * np.abs(axis) + self.radius * np.sqrt(np.clip(1.0 - axis**2, 0.0, None))

    def contains(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p)
        return (p[..., 0] ** 2 + p[..., 1] ** 2 <= self.radius**2) & (np.abs(p[..., 2]) <= self.half_height)


@dataclass(frozen=True)
class MeshBVH:
    """Flattened median-split BVH. Triangle arrays are in traversal order."""

    node_bounds: np.ndarray  # (N, 6) lo xyz, hi xyz
    node_child: np.ndarray   # (N, 2) left, right; left = -1 for leaves
    node_tris: np.ndarray    # (N, 2) start, count
    tri_v: np.ndarray        # (T, 9)
    tri_n: np.ndarray        # (T, 3) unit geometric normals
    order: np.ndarray        # (T,) original triangle index per slot

    LEAF_SIZE = 4


def build_bvh(vertices: np.ndarray, triangles: np.ndarray, leaf_size: int = MeshBVH.LEAF_SIZE) -> MeshBVH:
    """Median split on the widest centroid axis until leaves hold <= leaf_size."""
    tri = vertices[triangles]  # (T, 3, 3)
    lo_t = tri.min(axis=1)
    hi_t = tri.max(axis=1)
    cent = tri.mean(axis=1)

    bounds, child, tris, order = [], [], [], []
    # (index list, parent slot, side)
    stack = [(np.arange(len(triangles)), -1, 0)]
    while stack:
        idx, parent, side = stack.pop()
        node = len(bounds)
        if parent >= 0:
            child[parent][side] = node
        lo = lo_t[idx].min(axis=0) - 1e-9
        hi = hi_t[idx].max(axis=0) + 1e-9
        bounds.append(np.concatenate([lo, hi]))
        if len(idx) <= leaf_size:
            child.append([-1, -1])
            tris.append([len(order), len(idx)])
            order.extend(idx.tolist())
            continue
        child.append([0, 0])
        tris.append([0, 0])
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        idx = idx[np.argsort(c[:, axis], kind="stable")]
        mid = len(idx) // 2
        # right pushed first so the left subtree is laid out first
        stack.append((idx[mid:], node, 1))
        stack.append((idx[:mid], node, 0))

    order = np.asarray(order, dtype=np.int64)
    tv = tri[order].reshape(-1, 9)
    e1 = tri[order, 1] - tri[order, 0]
    e2 = tri[order, 2] - tri[order, 0]
    n = np.cross(e1, e2)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return MeshBVH(
        np.ascontiguousarray(bounds, dtype=np.float64),
        np.ascontiguousarray(child, dtype=np.int64),
        np.ascontiguousarray(tris, dtype=np.int64),
        np.ascontiguousarray(tv),
        np.ascontiguousarray(n),
        order,
    )


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    bvh: MeshBVH = field(init=False, repr=False)

    kind = K.KIND_MESH

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or not np.all(np.isfinite(v)):
            raise InvalidArgumentError("mesh vertices must be a finite (V, 3) array")
        if f.ndim != 2 or f.shape[1] != 3 or len(f) < 1:
            raise InvalidArgumentError("mesh needs at least one triangle as a (T, 3) index array")
        if f.min() < 0 or f.max() >= len(v):
            raise InvalidArgumentError("mesh triangle index out of range")
        tri = v[f]
        area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        if np.any(area2 <= 0.0):
            raise InvalidArgumentError("mesh contains a zero-area triangle")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)
        object.__setattr__(self, "bvh", build_bvh(v, f))

    def params(self) -> np.ndarray:
        return np.zeros(4)

    def local_bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def world_half_extents(self, rotation: np.ndarray) -> np.ndarray:
        lo, hi = self.local_bounds()
        c = (lo + hi) / 2
        p = (self.vertices - c) @ rotation.T
        return np.max(np.abs(p), axis=0)

    def __eq__(self, other):
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(self.triangles, other.triangles)

    def __hash__(self):
        return hash((self.vertices.tobytes(), self.triangles.tobytes()))


Primitive = Union[Box, Sphere, Cylinder, TriangleMesh]


def primitive_hit(ray: Ray, primitive: Primitive):
    """``(t, normal)`` for a ray in the primitive's local frame, or None."""
    o, d = ray.origin, ray.direction
    if isinstance(primitive, TriangleMesh):
        b = primitive.bvh
        res = K.mesh_hit(*o, *d, 0, b.node_bounds, b.node_child, b.node_tris, b.tri_v, b.tri_n, math.inf)
    elif isinstance(primitive, Box):
        res = K.box_hit(*o, *d, *primitive.half_extents)
    elif isinstance(primitive, Sphere):
        res = K.sphere_hit(*o, *d, primitive.radius)
    elif isinstance(primitive, Cylinder):
        res = K.cylinder_hit(*o, *d, primitive.radius, primitive.half_height)
    else:
        raise InvalidArgumentError(f"unsupported primitive {type(primitive).__name__}")
    t = res[0]
    if t == math.inf:
        return None
    return t, np.array(res[1:])


def intersect_primitive(local_ray: Ray, primitive: Primitive) -> Optional[float]:
    """Smallest ``t > T_MIN`` at which the local ray meets the surface.

    A ray starting inside a closed primitive returns the exit distance.
    """
    res = primitive_hit(local_ray, primitive)
    return None if res is None else res[0]


# ------------------------------------------------------------- packed scenes


@dataclass(frozen=True)
class PackedScene:
    """Flat arrays consumed by the compiled cast kernel.

    Row ``k`` describes one object; ``ids[k]`` maps it back to the scene's
    object id (``ROOM_SHELL_ID`` for the room shell, always last).
    """

    ids: np.ndarray
    kinds: np.ndarray
    params: np.ndarray
    refs: np.ndarray
    rot: np.ndarray
    trans: np.ndarray
    aabb: np.ndarray
    node_bounds: np.ndarray
    node_child: np.ndarray
    node_tris: np.ndarray
    tri_v: np.ndarray
    tri_n: np.ndarray

    def kernel_args(self):
        return (self.kinds, self.params, self.refs, self.rot, self.trans, self.aabb,
                self.node_bounds, self.node_child, self.node_tris, self.tri_v, self.tri_n)


def world_aabb(primitive: Primitive, pose: Pose):
    lo, hi = primitive.local_bounds()
    center = pose.apply((lo + hi) / 2)
    half = primitive.world_half_extents(pose.rotation)
    return center - half, center + half


def pack_objects(items: Sequence[tuple], pad: float = K.AABB_PAD) -> PackedScene:
    """Pack ``(object_id, primitive, pose)`` triples for :func:`cast_rays`."""
    n = len(items)
    kinds = np.zeros(n, np.int64)
    params = np.zeros((n, 4))
    refs = np.full(n, -1, np.int64)
    rot = np.zeros((n, 3, 3))
    trans = np.zeros((n, 3))
    aabb = np.zeros((n, 6))
    ids = np.zeros(n, np.int64)
    nb, nc, nt, tv, tn = [np.zeros((0, 6))], [np.zeros((0, 2), np.int64)], [np.zeros((0, 2), np.int64)], \
        [np.zeros((0, 9))], [np.zeros((0, 3))]
    n_nodes = 0
    n_tris = 0
    for k, (oid, prim, pose) in enumerate(items):
        ids[k] = oid
        kinds[k] = prim.kind
        params[k] = prim.params()
        rot[k] = pose.rotation
        trans[k] = pose.translation
        lo, hi = world_aabb(prim, pose)
        aabb[k] = np.concatenate([lo - pad, hi + pad])
        if isinstance(prim, TriangleMesh):
            b = prim.bvh
            refs[k] = n_nodes
            child = b.node_child.copy()
            child[child >= 0] += n_nodes
            tris = b.node_tris.copy()
            tris[:, 0] += n_tris
            nb.append(b.node_bounds)
            nc.append(child)
            nt.append(tris)
            tv.append(b.tri_v)
            tn.append(b.tri_n)
            n_nodes += len(b.node_bounds)
            n_tris += len(b.tri_v)
    return PackedScene(
        ids, kinds, params, refs, rot, trans, aabb,
        np.ascontiguousarray(np.concatenate(nb)),
        np.ascontiguousarray(np.concatenate(nc)),
        np.ascontiguousarray(np.concatenate(nt)),
        np.ascontiguousarray(np.concatenate(tv)),
        np.ascontiguousarray(np.concatenate(tn)),
    )


def cast(packed: PackedScene, origins: np.ndarray, dirs: np.ndarray, max_range: float = math.inf,
         start: int = 0, stop: Optional[int] = None, out=None):
    """Run the cast kernel over rays ``start..stop``; returns ``(t, packed_index, normal)``."""
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = len(dirs)
    stop = n if stop is None else stop
    if out is None:
        out = (np.empty(n), np.empty(n, np.int64), np.empty((n, 3)))
    K.cast_rays(origins, dirs, start, stop, *packed.kernel_args(), float(max_range), *out)
    return out


def nearest_hit(world_ray: Ray, scene, max_range: float = math.inf) -> Optional[Hit]:
    """Globally nearest return over every object of ``scene`` and its room shell."""
    packed = scene.packed
    if len(packed.ids) == 0:
        return None
    t, idx, normal = cast(packed, world_ray.origin[None], world_ray.direction[None], max_range)
    if idx[0] < 0:
        return None
    return Hit(float(t[0]), int(packed.ids[idx[0]]), normal[0].copy(), world_ray.at(float(t[0])))
