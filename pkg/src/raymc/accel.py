"""Bounding volume hierarchies and closest-hit ray queries.

Trees are built in numpy (binned SAH, 16 bins per axis, median fallback) and
flattened into plain arrays.  Any number of trees can be packed into one
:class:`BvhArrays` bundle; traversal kernels then address a tree by its root
node, which is what an acceleration-structure handle resolves to.

Two intersection arithmetics are available: double precision (default) and a
float32 emulation of fixed-function hardware.  Both discard hits at
``t <= 0``.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._jit import kernel

LEAF_SIZE = 4
SAH_BINS = 16
MAX_DEPTH = 64
STACK_SIZE = 64
DET_EPS = 1e-13
BOX_PAD_REL = 1e-6

DMAX_DOUBLE = float(np.finfo(np.float64).max)
DMAX_SINGLE = float(np.finfo(np.float32).max)

_F32_ZERO = np.float32(0.0)
_F32_ONE = np.float32(1.0)
_F32_EPS = np.float32(DET_EPS)


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.full(3, np.inf), np.full(3, -np.inf))

    @classmethod
    def of_points(cls, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def is_empty(self):
        return bool(np.any(self.min > self.max))

    def contains(self, p, slack=0.0):
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.min - slack) and np.all(p <= self.max + slack))

    def union(self, other):
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))


@dataclass
class Bvh:
    """One flattened tree over a triangle set.

    ``order[i]`` is the input index of the i-th triangle in leaf order; leaves
    reference contiguous ranges ``[first, first + count)`` of that order.
    """

    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    first: np.ndarray
    count: np.ndarray
    order: np.ndarray
    triangles: np.ndarray
    depth: int
    handle: int = 0
    _packed: object = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self):
        return len(self.left)

    @property
    def root_box(self):
        return Aabb(self.node_min[0].copy(), self.node_max[0].copy())


class Hit(NamedTuple):
    d_min: float
    triangle: int
    front: bool
    u: float
    v: float

    @property
    def face(self):
        return "front" if self.front else "back"


class BvhArrays(NamedTuple):
    """Several trees packed for the kernels; ``roots[h]`` is tree h's root."""

    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    first: np.ndarray
    count: np.ndarray
    prim: np.ndarray
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    v0f: np.ndarray
    e1f: np.ndarray
    e2f: np.ndarray
    roots: np.ndarray


# --------------------------------------------------------------------------
# build


def _as_triangles(triangles):
    tri = np.ascontiguousarray(triangles, dtype=np.float64)
    if tri.ndim != 3 or tri.shape[1:] != (3, 3):
        raise ValueError("expected a (T, 3, 3) array of triangle vertices")
    return tri


def _area(lo, hi):
    d = hi - lo
    return 2.0 * (d[..., 0] * d[..., 1] + d[..., 1] * d[..., 2] + d[..., 2] * d[..., 0])


def _best_sah_split(cent, tlo, thi):
    """Best binned SAH partition as (axis, mask_left) or None."""
    best_cost = np.inf
    best = None
    n = len(cent)
    cmin = cent.min(axis=0)
    cmax = cent.max(axis=0)
    for axis in range(3):
        extent = cmax[axis] - cmin[axis]
        if extent <= 0.0:
            continue
        b = ((cent[:, axis] - cmin[axis]) * (SAH_BINS / extent)).astype(np.int64)
        np.clip(b, 0, SAH_BINS - 1, out=b)
        counts = np.bincount(b, minlength=SAH_BINS)
        blo = np.full((SAH_BINS, 3), np.inf)
        bhi = np.full((SAH_BINS, 3), -np.inf)
        np.minimum.at(blo, b, tlo)
        np.maximum.at(bhi, b, thi)
        llo = np.minimum.accumulate(blo, axis=0)[:-1]
        lhi = np.maximum.accumulate(bhi, axis=0)[:-1]
        rlo = np.minimum.accumulate(blo[::-1], axis=0)[::-1][1:]
        rhi = np.maximum.accumulate(bhi[::-1], axis=0)[::-1][1:]
        nl = np.cumsum(counts)[:-1]
        nr = n - nl
        with np.errstate(invalid="ignore"):
            cost = np.where(nl > 0, _area(llo, lhi) * nl, 0.0) + np.where(
                nr > 0, _area(rlo, rhi) * nr, 0.0
            )
        cost[(nl == 0) | (nr == 0)] = np.inf
        k = int(np.argmin(cost))
        if cost[k] < best_cost:
            best_cost = cost[k]
            best = (axis, b <= k)
    return best


def build_bvh(triangles, handle=0):
    """Binned-SAH BVH with leaves of at most four triangles."""
    tri = _as_triangles(triangles)
    n = len(tri)
    if n == 0:
        raise ValueError("cannot build a BVH over zero triangles")
    tlo = tri.min(axis=1)
    thi = tri.max(axis=1)
    cent = 0.5 * (tlo + thi)
    pad = BOX_PAD_REL * max(1.0, float(np.abs(tri).max()))

    node_min, node_max, left, right, first, count = [], [], [], [], [], []
    order = []

    def new_node(idx):
        node_min.append(tlo[idx].min(axis=0) - pad)
        node_max.append(thi[idx].max(axis=0) + pad)
        left.append(-1)
        right.append(-1)
        first.append(0)
        count.append(0)
        return len(left) - 1

    max_depth = 0
    stack = [(new_node(np.arange(n)), np.arange(n), 1)]
    while stack:
        node, idx, depth = stack.pop()
        max_depth = max(max_depth, depth)
        if len(idx) <= LEAF_SIZE:
            first[node] = len(order)
            count[node] = len(idx)
            order.extend(idx.tolist())
            continue
        split = None
        # SAH may peel off slivers; fall back to halving while it still fits in 64 levels
        if depth + int(np.ceil(np.log2(len(idx) / LEAF_SIZE))) < MAX_DEPTH - 1:
            split = _best_sah_split(cent[idx], tlo[idx], thi[idx])
        if split is None:
            ext = cent[idx].max(axis=0) - cent[idx].min(axis=0)
            axis = int(np.argmax(ext))
            srt = idx[np.argsort(cent[idx, axis], kind="stable")]
            half = len(srt) // 2
            lidx, ridx = np.sort(srt[:half]), np.sort(srt[half:])
        else:
            mask = split[1]
            lidx, ridx = idx[mask], idx[~mask]
        lnode = new_node(lidx)
        rnode = new_node(ridx)
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, ridx, depth + 1))
        stack.append((lnode, lidx, depth + 1))

    return Bvh(
        node_min=np.array(node_min),
        node_max=np.array(node_max),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        first=np.array(first, dtype=np.int64),
        count=np.array(count, dtype=np.int64),
        order=np.array(order, dtype=np.int64),
        triangles=tri,
        depth=max_depth,
        handle=handle,
    )


def validate_bvh(bvh, slack=1e-9):
    """Structural check: permutation coverage, containment, depth; raises on failure."""
    n = len(bvh.triangles)
    if sorted(bvh.order.tolist()) != list(range(n)):
        raise AssertionError("leaf order is not a permutation of the input triangles")
    seen = np.zeros(n, dtype=np.int64)
    stack = [(0, 1)]
    while stack:
        node, depth = stack.pop()
        if depth > MAX_DEPTH:
            raise AssertionError("tree deeper than 64")
        lo, hi = bvh.node_min[node], bvh.node_max[node]
        if bvh.left[node] < 0:
            if not 1 <= bvh.count[node] <= LEAF_SIZE:
                raise AssertionError(f"leaf {node} holds {bvh.count[node]} triangles")
            ids = bvh.order[bvh.first[node]:bvh.first[node] + bvh.count[node]]
            seen[ids] += 1
            pts = bvh.triangles[ids].reshape(-1, 3)
        else:
            kids = (bvh.left[node], bvh.right[node])
            for k in kids:
                stack.append((k, depth + 1))
            pts = np.concatenate([bvh.node_min[list(kids)], bvh.node_max[list(kids)]])
        if np.any(pts < lo - slack) or np.any(pts > hi + slack):
            raise AssertionError(f"node {node} does not contain its contents")
    if np.any(seen != 1):
        raise AssertionError("some triangle is not in exactly one leaf")
    return True


def pack_bvhs(bvhs, record_offsets=None):
    """Concatenate trees; triangle i of tree h maps to record offsets[h] + i."""
    if record_offsets is None:
        record_offsets = np.cumsum([0] + [len(b.triangles) for b in bvhs[:-1]])
    node_off = 0
    prim_off = 0
    parts = {k: [] for k in ("node_min", "node_max", "left", "right", "first", "count",
                             "prim", "tris")}
    roots = []
    for b, roff in zip(bvhs, record_offsets):
        roots.append(node_off)
        internal = b.left >= 0
        parts["node_min"].append(b.node_min)
        parts["node_max"].append(b.node_max)
        parts["left"].append(np.where(internal, b.left + node_off, -1))
        parts["right"].append(np.where(internal, b.right + node_off, -1))
        parts["first"].append(np.where(internal, 0, b.first + prim_off))
        parts["count"].append(b.count)
        parts["prim"].append(b.order + int(roff))
        parts["tris"].append(b.triangles[b.order])
        node_off += b.n_nodes
        prim_off += len(b.order)
    tris = np.concatenate(parts["tris"])
    v0 = np.ascontiguousarray(tris[:, 0])
    e1 = np.ascontiguousarray(tris[:, 1] - tris[:, 0])
    e2 = np.ascontiguousarray(tris[:, 2] - tris[:, 0])
    t32 = tris.astype(np.float32)
    return BvhArrays(
        node_min=np.ascontiguousarray(np.concatenate(parts["node_min"])),
        node_max=np.ascontiguousarray(np.concatenate(parts["node_max"])),
        left=np.concatenate(parts["left"]).astype(np.int64),
        right=np.concatenate(parts["right"]).astype(np.int64),
        first=np.concatenate(parts["first"]).astype(np.int64),
        count=np.concatenate(parts["count"]).astype(np.int64),
        prim=np.concatenate(parts["prim"]).astype(np.int64),
        v0=v0,
        e1=e1,
        e2=e2,
        v0f=np.ascontiguousarray(t32[:, 0]),
        e1f=np.ascontiguousarray(t32[:, 1] - t32[:, 0]),
        e2f=np.ascontiguousarray(t32[:, 2] - t32[:, 0]),
        roots=np.array(roots, dtype=np.int64),
    )


# --------------------------------------------------------------------------
# kernels


@kernel(inline=True)
def mt_double(ox, oy, oz, dx, dy, dz, v0, e1, e2, i, tmin, dmax):
    """Moller-Trumbore against prim i; returns (t, u, v, det) with t=-1 on miss.

    Only hits with tmin < t <= dmax count (tmin is 0 for ordinary queries).
    """
    e1x = e1[i, 0]
    e1y = e1[i, 1]
    e1z = e1[i, 2]
    e2x = e2[i, 0]
    e2y = e2[i, 1]
    e2z = e2[i, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < DET_EPS:
        return -1.0, 0.0, 0.0, det
    inv = 1.0 / det
    sx = ox - v0[i, 0]
    sy = oy - v0[i, 1]
    sz = oz - v0[i, 2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0, 0.0, 0.0, det
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0, 0.0, 0.0, det
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= tmin or t > dmax:
        return -1.0, 0.0, 0.0, det
    return t, u, v, det


@kernel
def mt_single(ox, oy, oz, dx, dy, dz, v0, e1, e2, i, tmin, dmax):
    """Same test carried out entirely in float32 (ray and vertices rounded)."""
    e1x = e1[i, 0]
    e1y = e1[i, 1]
    e1z = e1[i, 2]
    e2x = e2[i, 0]
    e2y = e2[i, 1]
    e2z = e2[i, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < _F32_EPS:
        return -1.0, 0.0, 0.0, float(det)
    inv = _F32_ONE / det
    sx = ox - v0[i, 0]
    sy = oy - v0[i, 1]
    sz = oz - v0[i, 2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < _F32_ZERO or u > _F32_ONE:
        return -1.0, 0.0, 0.0, float(det)
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < _F32_ZERO or u + v > _F32_ONE:
        return -1.0, 0.0, 0.0, float(det)
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= tmin or t > dmax:
        return -1.0, 0.0, 0.0, float(det)
    return float(t), float(u), float(v), float(det)


_BIG = 1e300  # stands in for 1/0 so that 0 * (1/d) stays finite


@kernel
def inv_dir(d):
    if d == 0.0:
        return _BIG
    return 1.0 / d


@kernel(inline=True)
def slab(ox, oy, oz, ix, iy, iz, lo, hi, k, tlimit):
    """Entry distance of the ray into box k, or -1 if it misses [0, tlimit].

    ``ix, iy, iz`` are the reciprocal direction components (see inv_dir).
    """
    a = (lo[k, 0] - ox) * ix
    b = (hi[k, 0] - ox) * ix
    t0 = min(a, b)
    t1 = min(max(a, b), tlimit)
    a = (lo[k, 1] - oy) * iy
    b = (hi[k, 1] - oy) * iy
    t0 = max(t0, min(a, b))
    t1 = min(t1, max(a, b))
    a = (lo[k, 2] - oz) * iz
    b = (hi[k, 2] - oz) * iz
    t0 = max(t0, min(a, b))
    t1 = min(t1, max(a, b))
    if t0 > t1 or t1 < 0.0:
        return -1.0
    return max(t0, 0.0)


@kernel(inline=True)
def traverse(bv, root, ox, oy, oz, dx, dy, dz, tmin, dmax, cull_front, single, skip, stack,
             tstack):
    """Closest hit in one tree.

    Returns (found, t, record, front, u, v).  Ties in t resolve to the lowest
    record index; with ``cull_front`` front-face hits are ignored, and record
    ``skip`` (-1 for none) is never reported.
    """
    best_t = dmax
    best_rec = -1
    best_front = False
    best_u = 0.0
    best_v = 0.0
    ox32 = np.float32(ox)
    oy32 = np.float32(oy)
    oz32 = np.float32(oz)
    dx32 = np.float32(dx)
    dy32 = np.float32(dy)
    dz32 = np.float32(dz)
    dmax32 = np.float32(min(dmax, DMAX_SINGLE))
    tmin32 = np.float32(tmin)
    ix = inv_dir(dx)
    iy = inv_dir(dy)
    iz = inv_dir(dz)

    t_root = slab(ox, oy, oz, ix, iy, iz, bv.node_min, bv.node_max, root, dmax)
    if t_root < 0.0:
        return False, 0.0, -1, False, 0.0, 0.0
    stack[0] = root
    tstack[0] = t_root
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if tstack[sp] > best_t:
            continue
        lnode = bv.left[node]
        if lnode < 0:
            start = bv.first[node]
            for j in range(start, start + bv.count[node]):
                if single:
                    t, u, v, det = mt_single(ox32, oy32, oz32, dx32, dy32, dz32,
                                             bv.v0f, bv.e1f, bv.e2f, j, tmin32, dmax32)
                else:
                    t, u, v, det = mt_double(ox, oy, oz, dx, dy, dz,
                                             bv.v0, bv.e1, bv.e2, j, tmin, dmax)
                if t < 0.0:
                    continue
                front = det > 0.0
                if cull_front and front:
                    continue
                rec = bv.prim[j]
                if rec == skip:
                    continue
                if best_rec < 0 or t < best_t or (t == best_t and rec < best_rec):
                    best_t = t
                    best_rec = rec
                    best_front = front
                    best_u = u
                    best_v = v
            continue
        rnode = bv.right[node]
        tl = slab(ox, oy, oz, ix, iy, iz, bv.node_min, bv.node_max, lnode, best_t)
        tr = slab(ox, oy, oz, ix, iy, iz, bv.node_min, bv.node_max, rnode, best_t)
        if tl >= 0.0 and tr >= 0.0:
            if tl <= tr:
                stack[sp] = rnode
                tstack[sp] = tr
                stack[sp + 1] = lnode
                tstack[sp + 1] = tl
            else:
                stack[sp] = lnode
                tstack[sp] = tl
                stack[sp + 1] = rnode
                tstack[sp + 1] = tr
            sp += 2
        elif tl >= 0.0:
            stack[sp] = lnode
            tstack[sp] = tl
            sp += 1
        elif tr >= 0.0:
            stack[sp] = rnode
            tstack[sp] = tr
            sp += 1
    if best_rec < 0:
        return False, 0.0, -1, False, 0.0, 0.0
    return True, best_t, best_rec, best_front, best_u, best_v


@kernel
def brute_force(v0, e1, e2, v0f, e1f, e2f, ox, oy, oz, dx, dy, dz, dmax, cull_front, single):
    best_t = dmax
    best_rec = -1
    best_front = False
    best_u = 0.0
    best_v = 0.0
    ox32 = np.float32(ox)
    oy32 = np.float32(oy)
    oz32 = np.float32(oz)
    dx32 = np.float32(dx)
    dy32 = np.float32(dy)
    dz32 = np.float32(dz)
    dmax32 = np.float32(min(dmax, DMAX_SINGLE))
    tmin32 = np.float32(0.0)
    for j in range(v0.shape[0]):
        if single:
            t, u, v, det = mt_single(ox32, oy32, oz32, dx32, dy32, dz32, v0f, e1f, e2f, j,
                                     tmin32, dmax32)
        else:
            t, u, v, det = mt_double(ox, oy, oz, dx, dy, dz, v0, e1, e2, j, 0.0, dmax)
        if t < 0.0:
            continue
        front = det > 0.0
        if cull_front and front:
            continue
        if best_rec < 0 or t < best_t:
            best_t = t
            best_rec = j
            best_front = front
            best_u = u
            best_v = v
    if best_rec < 0:
        return False, 0.0, -1, False, 0.0, 0.0
    return True, best_t, best_rec, best_front, best_u, best_v


@kernel
def traverse_many(bv, root, origins, dirs, dmax, cull_front, single, out_t, out_rec, out_front):
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    tstack = np.empty(STACK_SIZE, dtype=np.float64)
    for k in range(origins.shape[0]):
        found, t, rec, front, u, v = traverse(
            bv, root, origins[k, 0], origins[k, 1], origins[k, 2],
            dirs[k, 0], dirs[k, 1], dirs[k, 2], 0.0, dmax, cull_front, single, -1, stack, tstack)
        out_t[k] = t
        out_rec[k] = rec
        out_front[k] = front


@kernel
def brute_force_many(v0, e1, e2, v0f, e1f, e2f, origins, dirs, dmax, cull_front, single,
                     out_t, out_rec, out_front):
    for k in range(origins.shape[0]):
        found, t, rec, front, u, v = brute_force(
            v0, e1, e2, v0f, e1f, e2f, origins[k, 0], origins[k, 1], origins[k, 2],
            dirs[k, 0], dirs[k, 1], dirs[k, 2], dmax, cull_front, single)
        out_t[k] = t
        out_rec[k] = rec
        out_front[k] = front


# --------------------------------------------------------------------------
# Python-facing queries


def _check_dir(direction):
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("ray direction must be a unit vector")
    return d


def _dmax(d_max, single):
    limit = DMAX_SINGLE if single else DMAX_DOUBLE
    if d_max is None or d_max == np.inf or d_max > limit:
        return limit
    if d_max <= 0:
        raise ValueError("d_max must be positive")
    return float(d_max)


@dataclass
class _Packed:
    arrays: BvhArrays
    stack: np.ndarray = field(default_factory=lambda: np.empty(STACK_SIZE, dtype=np.int64))
    tstack: np.ndarray = field(default_factory=lambda: np.empty(STACK_SIZE, dtype=np.float64))


def _packed(bvh):
    if bvh._packed is None:
        bvh._packed = _Packed(pack_bvhs([bvh]))
    return bvh._packed


def intersect_closest(bvh, origin, direction, d_max=None, cull_front=False, single=False):
    """Closest hit in (0, d_max] or None."""
    d = _check_dir(direction)
    o = np.asarray(origin, dtype=float)
    p = _packed(bvh)
    found, t, rec, front, u, v = traverse(
        p.arrays, 0, float(o[0]), float(o[1]), float(o[2]), float(d[0]), float(d[1]),
        float(d[2]), 0.0, _dmax(d_max, single), bool(cull_front), bool(single), -1, p.stack,
        p.tstack)
    if not found:
        return None
    return Hit(float(t), int(rec), bool(front), float(u), float(v))


def _edge_arrays(triangles):
    tri = _as_triangles(triangles)
    t32 = tri.astype(np.float32)
    return (np.ascontiguousarray(tri[:, 0]), np.ascontiguousarray(tri[:, 1] - tri[:, 0]),
            np.ascontiguousarray(tri[:, 2] - tri[:, 0]), np.ascontiguousarray(t32[:, 0]),
            np.ascontiguousarray(t32[:, 1] - t32[:, 0]),
            np.ascontiguousarray(t32[:, 2] - t32[:, 0]))


def brute_force_closest(triangles, origin, direction, d_max=None, cull_front=False,
                        single=False) -> Optional[Hit]:
    """Exhaustive scan with the same hit rules and tie-breaking as the BVH."""
    if len(triangles) == 0:
        return None
    d = _check_dir(direction)
    o = np.asarray(origin, dtype=float)
    found, t, rec, front, u, v = brute_force(
        *_edge_arrays(triangles), float(o[0]), float(o[1]), float(o[2]), float(d[0]),
        float(d[1]), float(d[2]), _dmax(d_max, single), bool(cull_front), bool(single))
    if not found:
        return None
    return Hit(float(t), int(rec), bool(front), float(u), float(v))


def intersect_batch(bvh, origins, dirs, d_max=None, cull_front=False, single=False):
    """Vectorised closest-hit: arrays (t, triangle or -1, front)."""
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = len(origins)
    out_t = np.zeros(n)
    out_rec = np.full(n, -1, dtype=np.int64)
    out_front = np.zeros(n, dtype=np.bool_)
    traverse_many(_packed(bvh).arrays, 0, origins, dirs, _dmax(d_max, single),
                  bool(cull_front), bool(single), out_t, out_rec, out_front)
    return out_t, out_rec, out_front


def brute_force_batch(triangles, origins, dirs, d_max=None, cull_front=False, single=False):
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = len(origins)
    out_t = np.zeros(n)
    out_rec = np.full(n, -1, dtype=np.int64)
    out_front = np.zeros(n, dtype=np.bool_)
    brute_force_many(*_edge_arrays(triangles), origins, dirs, _dmax(d_max, single),
                     bool(cull_front), bool(single), out_t, out_rec, out_front)
    return out_t, out_rec, out_front
