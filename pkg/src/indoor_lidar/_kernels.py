"""Compiled ray/primitive intersection kernels.

All routines work on scalar coordinates in the primitive's local frame and
return ``(t, nx, ny, nz)``: the smallest ``t > T_MIN`` and a unit normal that
faces the incoming ray. A miss is reported as ``t = inf``.
"""

import math

import numpy as np
from numba import njit

T_MIN = 1e-6
TANGENT_EPS = 1e-12
AABB_PAD = 1e-7

KIND_BOX = 0
KIND_SPHERE = 1
KIND_CYLINDER = 2
KIND_MESH = 3

_STACK = 64


@njit(cache=True, nogil=True, inline="always")
def _slab(o, d, lo, hi):
    if d == 0.0:
        if o < lo or o > hi:
            return math.inf, -math.inf
        return -math.inf, math.inf
    t1 = (lo - o) / d
    t2 = (hi - o) / d
    if t1 < t2:
        return t1, t2
    return t2, t1


@njit(cache=True, nogil=True)
def aabb_range(ox, oy, oz, dx, dy, dz, x0, y0, z0, x1, y1, z1):
    """Parametric interval of the ray inside an axis-aligned box (may be empty)."""
    a0, a1 = _slab(ox, dx, x0, x1)
    b0, b1 = _slab(oy, dy, y0, y1)
    c0, c1 = _slab(oz, dz, z0, z1)
    return max(a0, b0, c0), min(a1, b1, c1)


@njit(cache=True, nogil=True)
def to_local(R, t, ox, oy, oz, dx, dy, dz):
    """Express a world ray in the frame of pose ``(R, t)``: R^T (o - t), R^T d."""
    px = ox - t[0]
    py = oy - t[1]
    pz = oz - t[2]
    return (
        R[0, 0] * px + R[1, 0] * py + R[2, 0] * pz,
        R[0, 1] * px + R[1, 1] * py + R[2, 1] * pz,
        R[0, 2] * px + R[1, 2] * py + R[2, 2] * pz,
        R[0, 0] * dx + R[1, 0] * dy + R[2, 0] * dz,
        R[0, 1] * dx + R[1, 1] * dy + R[2, 1] * dz,
        R[0, 2] * dx + R[1, 2] * dy + R[2, 2] * dz,
    )


@njit(cache=True, nogil=True)
def box_hit(ox, oy, oz, dx, dy, dz, hx, hy, hz):
    tnx, tfx = _slab(ox, dx, -hx, hx)
    tny, tfy = _slab(oy, dy, -hy, hy)
    tnz, tfz = _slab(oz, dz, -hz, hz)
    # entry face: largest near-t, ties resolved x -> y -> z
    t_near = tnx
    near_axis = 0
    if tny > t_near:
        t_near = tny
        near_axis = 1
    if tnz > t_near:
        t_near = tnz
        near_axis = 2
    t_far = tfx
    far_axis = 0
    if tfy < t_far:
        t_far = tfy
        far_axis = 1
    if tfz < t_far:
        t_far = tfz
        far_axis = 2
    if t_near > t_far:
        return math.inf, 0.0, 0.0, 0.0
    if t_near > T_MIN:
        t = t_near
        axis = near_axis
    elif t_far > T_MIN:
        t = t_far
        axis = far_axis
    else:
        return math.inf, 0.0, 0.0, 0.0
    if axis == 0:
        return t, -math.copysign(1.0, dx), 0.0, 0.0
    if axis == 1:
        return t, 0.0, -math.copysign(1.0, dy), 0.0
    return t, 0.0, 0.0, -math.copysign(1.0, dz)


@njit(cache=True, nogil=True, inline="always")
def _facing(nx, ny, nz, dx, dy, dz):
    if nx * dx + ny * dy + nz * dz > 0.0:
        return -nx, -ny, -nz
    return nx, ny, nz


@njit(cache=True, nogil=True)
def sphere_hit(ox, oy, oz, dx, dy, dz, r):
    a = dx * dx + dy * dy + dz * dz
    b = ox * dx + oy * dy + oz * dz
    c = ox * ox + oy * oy + oz * oz - r * r
    disc = b * b - a * c
    if disc < -TANGENT_EPS:
        return math.inf, 0.0, 0.0, 0.0
    s = math.sqrt(max(disc, 0.0))
    t = (-b - s) / a
    if t <= T_MIN:
        t = (-b + s) / a
        if t <= T_MIN:
            return math.inf, 0.0, 0.0, 0.0
    nx = (ox + t * dx) / r
    ny = (oy + t * dy) / r
    nz = (oz + t * dz) / r
    inv = 1.0 / math.sqrt(nx * nx + ny * ny + nz * nz)
    nx, ny, nz = _facing(nx * inv, ny * inv, nz * inv, dx, dy, dz)
    return t, nx, ny, nz


@njit(cache=True, nogil=True)
def cylinder_hit(ox, oy, oz, dx, dy, dz, r, hh):
    best = math.inf
    nx = 0.0
    ny = 0.0
    nz = 0.0
    a = dx * dx + dy * dy
    if a > 0.0:
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - r * r
        disc = b * b - a * c
        if disc >= -TANGENT_EPS:
            s = math.sqrt(max(disc, 0.0))
            for sign in (-1.0, 1.0):
                t = (-b + sign * s) / a
                if t > T_MIN and t < best and abs(oz + t * dz) <= hh:
                    best = t
                    px = ox + t * dx
                    py = oy + t * dy
                    inv = 1.0 / math.sqrt(px * px + py * py)
                    nx = px * inv
                    ny = py * inv
                    nz = 0.0
    if dz != 0.0:
        for cap in (-hh, hh):
            t = (cap - oz) / dz
            if t > T_MIN and t < best:
                px = ox + t * dx
                py = oy + t * dy
                if px * px + py * py <= r * r:
                    best = t
                    nx = 0.0
                    ny = 0.0
                    nz = math.copysign(1.0, cap)
    if best == math.inf:
        return best, 0.0, 0.0, 0.0
    nx, ny, nz = _facing(nx, ny, nz, dx, dy, dz)
    return best, nx, ny, nz


@njit(cache=True, nogil=True)
def triangle_hit(ox, oy, oz, dx, dy, dz, v):
    """Two-sided Moller-Trumbore against ``v = (x0, y0, z0, x1, ..., z2)``."""
    e1x = v[3] - v[0]
    e1y = v[4] - v[1]
    e1z = v[5] - v[2]
    e2x = v[6] - v[0]
    e2y = v[7] - v[1]
    e2z = v[8] - v[2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-15:
        return math.inf
    inv = 1.0 / det
    sx = ox - v[0]
    sy = oy - v[1]
    sz = oz - v[2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return math.inf
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    w = (dx * qx + dy * qy + dz * qz) * inv
    if w < 0.0 or u + w > 1.0:
        return math.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= T_MIN:
        return math.inf
    return t


@njit(cache=True, nogil=True)
def mesh_hit(ox, oy, oz, dx, dy, dz, root, node_bounds, node_child, node_tris, tri_v, tri_n, t_limit):
    """Closest triangle hit by walking a flattened BVH.

    ``node_child[i] = (left, right)`` with ``left = -1`` marking a leaf whose
    triangles are ``node_tris[i] = (start, count)``. Children are visited
    nearest-first; subtrees whose box starts beyond the current best are
    skipped.
    """
    stack = np.empty(_STACK, np.int64)
    stack[0] = root
    top = 1
    best = t_limit
    best_tri = -1
    while top > 0:
        top -= 1
        node = stack[top]
        b = node_bounds[node]
        tn, tf = aabb_range(ox, oy, oz, dx, dy, dz, b[0], b[1], b[2], b[3], b[4], b[5])
        if tn > tf or tf <= T_MIN or tn > best:
            continue
        left = node_child[node, 0]
        if left < 0:
            start = node_tris[node, 0]
            for k in range(start, start + node_tris[node, 1]):
                t = triangle_hit(ox, oy, oz, dx, dy, dz, tri_v[k])
                if t < best or (t == best and best_tri >= 0 and k < best_tri):
                    best = t
                    best_tri = k
            continue
        right = node_child[node, 1]
        bl = node_bounds[left]
        br = node_bounds[right]
        tl, _ = aabb_range(ox, oy, oz, dx, dy, dz, bl[0], bl[1], bl[2], bl[3], bl[4], bl[5])
        tr, _ = aabb_range(ox, oy, oz, dx, dy, dz, br[0], br[1], br[2], br[3], br[4], br[5])
        if tl <= tr:
            stack[top] = right
            stack[top + 1] = left
        else:
            stack[top] = left
            stack[top + 1] = right
        top += 2
    if best_tri < 0:
        return math.inf, 0.0, 0.0, 0.0
    n = tri_n[best_tri]
    nx, ny, nz = _facing(n[0], n[1], n[2], dx, dy, dz)
    return best, nx, ny, nz


@njit(cache=True, nogil=True)
def primitive_hit(kind, params, ref, ox, oy, oz, dx, dy, dz,
                  node_bounds, node_child, node_tris, tri_v, tri_n, t_limit):
    if kind == KIND_BOX:
        return box_hit(ox, oy, oz, dx, dy, dz, params[0], params[1], params[2])
    if kind == KIND_SPHERE:
        return sphere_hit(ox, oy, oz, dx, dy, dz, params[0])
    if kind == KIND_CYLINDER:
        return cylinder_hit(ox, oy, oz, dx, dy, dz, params[0], params[1])
    return mesh_hit(ox, oy, oz, dx, dy, dz, ref, node_bounds, node_child, node_tris, tri_v, tri_n, t_limit)


@njit(cache=True, nogil=True)
def cast_rays(origins, dirs, start, stop, kinds, params, refs, rot, trans, aabb,
              node_bounds, node_child, node_tris, tri_v, tri_n, max_range,
              out_t, out_obj, out_normal):
    """Nearest hit for rays ``start..stop-1`` over every packed object.

    Objects are tested in index order and a later object replaces the current
    best only with a strictly smaller ``t``. ``out_obj`` receives the packed
    object index, or -1 for no hit within ``max_range``.
    """
    n_obj = kinds.shape[0]
    for i in range(start, stop):
        wox = origins[i, 0]
        woy = origins[i, 1]
        woz = origins[i, 2]
        wdx = dirs[i, 0]
        wdy = dirs[i, 1]
        wdz = dirs[i, 2]
        best = math.inf
        best_obj = -1
        bnx = 0.0
        bny = 0.0
        bnz = 0.0
        for k in range(n_obj):
            bb = aabb[k]
            tn, tf = aabb_range(wox, woy, woz, wdx, wdy, wdz, bb[0], bb[1], bb[2], bb[3], bb[4], bb[5])
            if tn > tf or tf <= T_MIN or tn > best:
                continue
            R = rot[k]
            lox, loy, loz, ldx, ldy, ldz = to_local(R, trans[k], wox, woy, woz, wdx, wdy, wdz)
            t, nx, ny, nz = primitive_hit(kinds[k], params[k], refs[k], lox, loy, loz, ldx, ldy, ldz,
                                          node_bounds, node_child, node_tris, tri_v, tri_n, math.inf)
            if t < best:
                best = t
                best_obj = k
                bnx = R[0, 0] * nx + R[0, 1] * ny + R[0, 2] * nz
                bny = R[1, 0] * nx + R[1, 1] * ny + R[1, 2] * nz
                bnz = R[2, 0] * nx + R[2, 1] * ny + R[2, 2] * nz
        if best_obj >= 0 and best <= max_range:
            out_t[i] = best
            out_obj[i] = best_obj
            out_normal[i, 0] = bnx
            out_normal[i, 1] = bny
            out_normal[i, 2] = bnz
        else:
            out_t[i] = math.inf
            out_obj[i] = -1
            out_normal[i, 0] = 0.0
            out_normal[i, 1] = 0.0
            out_normal[i, 2] = 0.0
