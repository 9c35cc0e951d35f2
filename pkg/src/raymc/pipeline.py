"""Acceleration-structure sets and the photon transport loop.

A photon is advanced by repeated closest-hit queries against the structure it
is currently in.  A query that finds a surface within the remaining
scattering distance hands over to :func:`hit_event` (move, then reflect or
cross); a query that finds nothing hands over to :func:`scatter_event` (move
the full scattering distance, then scatter).  Both live in compiled kernels;
the Python functions at the bottom wrap them for single-photon use.

Three strategies decide what a structure holds:

* ``single``: one tree over every triangle.  Records carry the media on both
  faces, no culling.
* ``region``: one tree per connected same-medium region, outward wound.
* ``tetra``: one tree per tetrahedron (4 outward faces).

For ``region`` and ``tetra`` front faces are culled (only exits from the
current cell are seen) and each record names the neighbouring medium and the
handle of the neighbouring structure.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import accel, geometry, scoring, sources
from ._jit import kernel
from .accel import Aabb, BvhArrays
from .geometry import MeshError, SurfaceMesh, TetMesh, containment_kernel
from .photon import (ALIVE, EV_BOUNDARY, EV_EXIT, EV_LAUNCH, EV_LEAK, EV_SCATTER, EV_TIMEOUT,
                     EXITED, LEAKED, TIMEOUT, PhotonState)
from .physics import (C0, EXTERIOR, TWO_PI, Medium, advance_time, fresnel, hg_cos_theta,
                      next_unit, reflect3, refract3, rotate, sample_step, split)
from .scoring import (T_ABSORBED, T_BOUNDARY, T_EXITED, T_FRESNEL, T_LAUNCHED, T_LEAKED_N,
                      T_LEAKED_W, T_PHOTONS, T_SCATTER, T_TIMEOUT, FluenceGrid, Summary,
                      deposit)

STRATEGIES = ("single", "region", "tetra")
PRECISIONS = ("double", "single")
DEFAULT_DELTA = 1e-5
DEFAULT_TMAX = 5.0
MAX_EVENTS = 10_000_000
TRAJ_LEN = 8
DEFAULT_MAX_LEAKS = 10_000
# after a surface event, hits this close (relative to coordinate size) are the same surface
SELF_HIT_EPS = 1e-9

# rough footprint of one per-tetrahedron structure (4 triangles, one leaf node, records)
TETRA_AS_BYTES = 736
DEFAULT_TETRA_BUDGET = 2 << 30


class MemoryBudgetError(MeshError):
    pass


# --------------------------------------------------------------------------
# acceleration-structure sets


class SceneArgs(NamedTuple):
    bv: BvhArrays
    normal: np.ndarray
    front_med: np.ndarray
    back_med: np.ndarray
    adj_as: np.ndarray
    as_medium: np.ndarray
    cull: bool
    media: np.ndarray
    lab: BvhArrays
    lab_front: np.ndarray
    lab_back: np.ndarray
    probe: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray


class TransportArgs(NamedTuple):
    delta: float
    tmax: float
    single: bool
    leak_detect: bool
    max_events: int


class GridArgs(NamedTuple):
    acc: np.ndarray
    gx: float
    gy: float
    gz: float
    h: float


@dataclass(eq=False)
class AccelSet:
    strategy: str
    bvhs: list
    arrays: BvhArrays
    normal: np.ndarray
    front_med: np.ndarray
    back_med: np.ndarray
    adj_as: np.ndarray
    as_medium: np.ndarray
    box: Aabb
    delta: float
    label: SurfaceMesh
    label_arrays: BvhArrays = field(repr=False, default=None)

    def __post_init__(self):
        if self.label_arrays is None:
            self.label_arrays = accel.pack_bvhs([accel.build_bvh(self.label.corners())])

    @property
    def cull(self):
        return self.strategy != "single"

    @property
    def n_as(self):
        return len(self.bvhs)

    @property
    def n_records(self):
        return len(self.normal)

    @property
    def max_medium(self):
        return int(max(self.front_med.max(), self.back_med.max()))

    def record(self, i):
        if not 0 <= i < self.n_records:
            raise IndexError(f"no record {i} (have {self.n_records})")
        return geometry.TriangleRecord(self.normal[i].copy(), 0.0, int(self.front_med[i]),
                                       int(self.back_med[i]), int(self.adj_as[i]))

    def records_of(self, handle):
        """Record indices belonging to structure ``handle``."""
        b = self.bvhs[handle]
        root = self.arrays.roots[handle]
        first = self.arrays.first[root:root + b.n_nodes]
        count = self.arrays.count[root:root + b.n_nodes]
        leaf = self.arrays.left[root:root + b.n_nodes] < 0
        idx = np.concatenate([self.arrays.prim[f:f + c] for f, c in zip(first[leaf], count[leaf])])
        return np.sort(idx)

    def scratch(self):
        return (np.empty(accel.STACK_SIZE, dtype=np.int64),
                np.empty(accel.STACK_SIZE, dtype=np.float64))

    def scene_args(self, media):
        table = media_table(media) if not isinstance(media, np.ndarray) else media
        if self.max_medium >= len(table):
            raise ValueError(f"mesh references medium {self.max_medium} but only "
                             f"{len(table) - 1} media are defined")
        box_slack = 1e-9 * max(1.0, float(np.abs(np.concatenate([self.box.min, self.box.max])).max()))
        return SceneArgs(
            self.arrays, self.normal, self.front_med, self.back_med, self.adj_as,
            self.as_medium, self.cull, np.ascontiguousarray(table, dtype=np.float64),
            self.label_arrays, self.label.front_medium, self.label.back_medium,
            geometry.PROBE_DIRS, self.box.min - box_slack, self.box.max + box_slack)


def media_table(media, exterior=EXTERIOR):
    """(M+1, 4) array of (mua, mus, g, n); row 0 is the exterior, rows 1.. the media."""
    if isinstance(media, dict):
        if not media:
            raise ValueError("empty media table")
        top = max(media)
        rows = [exterior] + [media.get(i) for i in range(1, top + 1)]
        missing = [i for i, m in enumerate(rows) if m is None]
        if missing:
            raise ValueError(f"medium {missing[0]} is not defined")
    else:
        rows = [exterior] + list(media)
    out = np.array([tuple(Medium(*m).validate()) for m in rows], dtype=np.float64)
    return out


def _records_from_surface(sm):
    normals, _ = sm.normals_and_areas()
    return normals


def build_accel_set(mesh, strategy="single", delta=DEFAULT_DELTA,
                    tetra_budget=DEFAULT_TETRA_BUDGET):
    """Structures, per-triangle records and scene box for one strategy."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r} (expected one of {STRATEGIES})")
    if delta < 0:
        raise ValueError("retraction length must be non-negative")
    if isinstance(mesh, (list, tuple)):
        mesh = geometry.merge_surfaces(mesh)
    if strategy == "tetra" and not isinstance(mesh, TetMesh):
        raise MeshError("tetra strategy needs a tetrahedral mesh")
    if isinstance(mesh, TetMesh):
        label = geometry.labeled_boundary(mesh)
    else:
        label = mesh
    if label.n_triangles == 0:
        raise MeshError("mesh has no boundary triangles")
    box = Aabb.of_points(label.corners())
    if strategy == "single":
        return _build_single(label, box, delta)
    if strategy == "region":
        return _build_region(mesh, label, box, delta)
    return _build_tetra(mesh, label, box, delta, tetra_budget)


def _build_single(sm, box, delta):
    bvh = accel.build_bvh(sm.corners(), handle=0)
    n = sm.n_triangles
    return AccelSet("single", [bvh], accel.pack_bvhs([bvh]), _records_from_surface(sm),
                    sm.front_medium.copy(), sm.back_medium.copy(), np.zeros(n, dtype=np.int64),
                    np.zeros(1, dtype=np.int64), box, float(delta), sm)


def _region_parts(mesh):
    """Per region: (corners outward-wound, normals, outside medium, own medium, neighbour)."""
    parts = []
    if isinstance(mesh, TetMesh):
        for r, sm in enumerate(geometry.extract_region_surfaces(mesh)):
            parts.append((sm.corners(), _records_from_surface(sm), sm.front_medium,
                          sm.back_medium, sm.region_id))
        return parts
    regions, side = geometry.surface_regions(mesh)
    corners = mesh.corners()
    normals = _records_from_surface(mesh)
    for r, reg in enumerate(regions):
        tri = reg.triangles
        fl = reg.flip
        c = corners[tri].copy()
        c[fl] = c[fl][:, [0, 2, 1]]
        nrm = np.where(fl[:, None], -normals[tri], normals[tri])
        outside = np.where(fl, mesh.back_medium[tri], mesh.front_medium[tri])
        nb = np.where(fl, side[tri, 1], side[tri, 0])
        if np.any((outside != 0) & (nb < 0)):
            raise MeshError(f"region {r} (medium {reg.medium}) borders a medium with no closed "
                            "region; the surface is not region-decomposable")
        parts.append((c, nrm, outside, np.full(len(tri), reg.medium), np.where(outside == 0, -1, nb)))
    return parts


def _build_region(mesh, label, box, delta):
    parts = _region_parts(mesh)
    if not parts:
        raise MeshError("no closed regions found for the region strategy")
    bvhs = [accel.build_bvh(p[0], handle=h) for h, p in enumerate(parts)]
    offsets = np.cumsum([0] + [len(p[0]) for p in parts[:-1]])
    return AccelSet(
        "region", bvhs, accel.pack_bvhs(bvhs, offsets),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]).astype(np.int64),
        np.concatenate([p[3] for p in parts]).astype(np.int64),
        np.concatenate([p[4] for p in parts]).astype(np.int64),
        np.array([int(p[3][0]) for p in parts], dtype=np.int64), box, float(delta), label)


def _build_tetra(tm, label, box, delta, budget):
    k = tm.n_tets
    need = k * TETRA_AS_BYTES
    if need > budget:
        raise MemoryBudgetError(
            f"tetra strategy needs about {need / 2**20:.1f} MiB for {k} per-tet structures, "
            f"over the {budget / 2**20:.1f} MiB budget")
    faces = tm.face_triangles()
    tris = tm.vertices[faces]  # (K, 4, 3, 3)
    flat = tris.reshape(-1, 3, 3)
    cr = np.cross(flat[:, 1] - flat[:, 0], flat[:, 2] - flat[:, 0])
    normal = cr / np.linalg.norm(cr, axis=1)[:, None]
    nb = tm.neighbors.reshape(-1)
    front = np.where(nb >= 0, tm.medium[np.maximum(nb, 0)], 0).astype(np.int64)
    back = np.repeat(tm.medium, 4).astype(np.int64)

    pts = tris.reshape(k, 12, 3)
    pad = accel.BOX_PAD_REL * np.maximum(1.0, np.abs(pts).max(axis=(1, 2)))
    node_min = pts.min(axis=1) - pad[:, None]
    node_max = pts.max(axis=1) + pad[:, None]
    t32 = flat.astype(np.float32)
    arrays = BvhArrays(
        node_min=np.ascontiguousarray(node_min), node_max=np.ascontiguousarray(node_max),
        left=np.full(k, -1, dtype=np.int64), right=np.full(k, -1, dtype=np.int64),
        first=np.arange(k, dtype=np.int64) * 4, count=np.full(k, 4, dtype=np.int64),
        prim=np.arange(4 * k, dtype=np.int64),
        v0=np.ascontiguousarray(flat[:, 0]), e1=np.ascontiguousarray(flat[:, 1] - flat[:, 0]),
        e2=np.ascontiguousarray(flat[:, 2] - flat[:, 0]),
        v0f=np.ascontiguousarray(t32[:, 0]), e1f=np.ascontiguousarray(t32[:, 1] - t32[:, 0]),
        e2f=np.ascontiguousarray(t32[:, 2] - t32[:, 0]),
        roots=np.arange(k, dtype=np.int64))
    order = np.arange(4, dtype=np.int64)
    neg1 = np.array([-1], dtype=np.int64)
    bvhs = [accel.Bvh(node_min[i:i + 1], node_max[i:i + 1], neg1, neg1,
                      np.zeros(1, dtype=np.int64), np.array([4], dtype=np.int64), order,
                      tris[i], 1, handle=i) for i in range(k)]
    return AccelSet("tetra", bvhs, arrays, normal, front, back, nb.astype(np.int64),
                    tm.medium.astype(np.int64), box, float(delta), label)


# --------------------------------------------------------------------------
# transport kernels


@kernel(inline=True)
def _push_event(ring, rpos, phf, kind):
    k = rpos[0] % ring.shape[0]
    ring[k, 0] = phf[0]
    ring[k, 1] = phf[1]
    ring[k, 2] = phf[2]
    ring[k, 3] = kind
    rpos[0] += 1


@kernel(inline=True)
def _move(sc, gr, phf, tally, length, mua, n):
    ax = phf[0]
    ay = phf[1]
    az = phf[2]
    bx = ax + length * phf[3]
    by = ay + length * phf[4]
    bz = az + length * phf[5]
    w = phf[7]
    w2 = deposit(gr.acc, gr.gx, gr.gy, gr.gz, gr.h, ax, ay, az, bx, by, bz, w, mua)
    tally[T_ABSORBED] += w - w2
    phf[0] = bx
    phf[1] = by
    phf[2] = bz
    phf[7] = w2
    phf[8] = advance_time(phf[8], length, n)


@kernel(inline=True)
def hit_event(sc, gr, phf, phi, rng, tally, length, rec, front):
    """Travel to the surface, then reflect or cross into the neighbour."""
    med = phi[0]
    mus = sc.media[med, 1]
    n1 = sc.media[med, 3]
    _move(sc, gr, phf, tally, length, sc.media[med, 0], n1)
    if mus > 0.0:
        phf[6] = max(phf[6] - length * mus, 0.0)
    tally[T_BOUNDARY] += 1
    phi[3] = EV_BOUNDARY
    phi[4] = rec
    newmed = sc.back_med[rec] if front else sc.front_med[rec]
    n2 = sc.media[newmed, 3]
    if n1 != n2:
        tally[T_FRESNEL] += 1
        vx = phf[3]
        vy = phf[4]
        vz = phf[5]
        nx = sc.normal[rec, 0]
        ny = sc.normal[rec, 1]
        nz = sc.normal[rec, 2]
        vn = vx * nx + vy * ny + vz * nz
        r = fresnel(n1, n2, abs(vn))
        if next_unit(rng) < r:
            phf[3], phf[4], phf[5] = reflect3(vx, vy, vz, nx, ny, nz)
            return
        if vn > 0.0:
            nx = -nx
            ny = -ny
            nz = -nz
        phf[3], phf[4], phf[5] = refract3(vx, vy, vz, nx, ny, nz, n1, n2)
    phi[0] = newmed
    if sc.cull:
        phi[1] = sc.adj_as[rec]
    if newmed == 0:
        phi[2] = EXITED
        tally[T_EXITED] += phf[7]


@kernel(inline=True)
def scatter_event(sc, gr, prm, phf, phi, rng, tally, length, stack, tstack):
    """Travel the full scattering distance and scatter.

    Returns -1 normally, else the medium found at the site when the photon
    is flagged as leaked (0 when it has left the scene box).
    """
    med = phi[0]
    _move(sc, gr, phf, tally, length, sc.media[med, 0], sc.media[med, 3])
    phf[6] = 0.0
    px = phf[0]
    py = phf[1]
    pz = phf[2]
    found = -1
    if (px < sc.box_lo[0] or py < sc.box_lo[1] or pz < sc.box_lo[2]
            or px > sc.box_hi[0] or py > sc.box_hi[1] or pz > sc.box_hi[2]):
        found = 0
    elif prm.leak_detect:
        cm = containment_kernel(sc.lab, sc.lab_front, sc.lab_back, px, py, pz, sc.probe,
                                stack, tstack)
        if cm != med:
            found = cm
    if found >= 0:
        phi[2] = LEAKED
        tally[T_LEAKED_W] += phf[7]
        tally[T_LEAKED_N] += 1
        return found
    cost = hg_cos_theta(sc.media[med, 2], next_unit(rng))
    phi_ = TWO_PI * next_unit(rng)
    phf[3], phf[4], phf[5] = rotate(phf[3], phf[4], phf[5], cost, phi_)
    phf[6] = sample_step(next_unit(rng))
    phi[3] = EV_SCATTER
    phi[4] = -1
    tally[T_SCATTER] += 1
    return -1


@kernel(inline=True)
def _timeout(sc, gr, phf, phi, tally, budget):
    med = phi[0]
    _move(sc, gr, phf, tally, budget, sc.media[med, 0], sc.media[med, 3])
    if sc.media[med, 1] > 0.0:
        phf[6] = max(phf[6] - budget * sc.media[med, 1], 0.0)
    phi[2] = TIMEOUT
    tally[T_TIMEOUT] += phf[7]


@kernel(inline=True)
def cast(sc, prm, phf, phi, stack, tstack):
    """One retracted closest-hit query; returns (found, restored L, record, front, dscat)."""
    med = phi[0]
    mus = sc.media[med, 1]
    delta = prm.delta
    if mus > 0.0:
        dscat = phf[6] / mus
        dmax = dscat + delta
    else:
        dscat = math.inf
        dmax = accel.DMAX_SINGLE if prm.single else accel.DMAX_DOUBLE
    tmin = 0.0
    skip = -1
    if phi[3] == EV_BOUNDARY:
        # the photon sits on the surface it just handled: neither that triangle nor
        # anything at (restored) distance ~0 is a new event
        skip = phi[4]
        scale = max(1.0, abs(phf[0]), abs(phf[1]), abs(phf[2]))
        tmin = delta + SELF_HIT_EPS * scale
    found, t, rec, front, u, v = accel.traverse(
        sc.bv, sc.bv.roots[phi[1]], phf[0] - delta * phf[3], phf[1] - delta * phf[4],
        phf[2] - delta * phf[5], phf[3], phf[4], phf[5], tmin, dmax, sc.cull, prm.single,
        skip, stack, tstack)
    length = t - delta
    if length < 0.0:
        length = 0.0
    return found, length, rec, front, dscat


@kernel
def trace(sc, prm, gr, phf, phi, rng, tally, stack, tstack, ring, rpos):
    """Advance an alive photon to termination; returns the leak-site medium or -1."""
    events = 0
    leak_med = -1
    while phi[2] == ALIVE:
        events += 1
        if events > prm.max_events:
            phi[2] = LEAKED
            tally[T_LEAKED_W] += phf[7]
            tally[T_LEAKED_N] += 1
            _push_event(ring, rpos, phf, EV_LEAK)
            break
        med = phi[0]
        budget = (prm.tmax - phf[8]) * C0 / sc.media[med, 3]
        if budget < 0.0:
            budget = 0.0
        found, length, rec, front, dscat = cast(sc, prm, phf, phi, stack, tstack)
        if found:
            if length > budget:
                _timeout(sc, gr, phf, phi, tally, budget)
                _push_event(ring, rpos, phf, EV_TIMEOUT)
                break
            hit_event(sc, gr, phf, phi, rng, tally, length, rec, front)
            _push_event(ring, rpos, phf, EV_EXIT if phi[2] == EXITED else EV_BOUNDARY)
        elif sc.media[med, 1] == 0.0:
            # nothing ahead in a non-scattering medium: the photon leaves the scene
            phi[2] = EXITED
            tally[T_EXITED] += phf[7]
            _push_event(ring, rpos, phf, EV_EXIT)
        elif dscat > budget:
            _timeout(sc, gr, phf, phi, tally, budget)
            _push_event(ring, rpos, phf, EV_TIMEOUT)
        else:
            leak_med = scatter_event(sc, gr, prm, phf, phi, rng, tally, dscat, stack, tstack)
            _push_event(ring, rpos, phf, EV_LEAK if leak_med >= 0 else EV_SCATTER)
    return leak_med


@kernel
def launch_photon(sc, src, prm, phf, phi, rng, tally, stack, tstack):
    """Launch and resolve the starting medium / structure; False if already done."""
    sources.launch_kernel(src, rng, phf)
    tally[T_LAUNCHED] += phf[7]
    tally[T_PHOTONS] += 1
    phi[2] = ALIVE
    phi[3] = EV_LAUNCH
    phi[4] = -1
    med = src.medium
    h = 0
    if sc.cull:
        h = src.as_handle
        if h < 0:
            h = sources.locate_as(sc.bv, phf[0], phf[1], phf[2], phf[3], phf[4], phf[5],
                                  sc.probe, stack, tstack)
        if h >= 0:
            med = sc.as_medium[h]
        else:
            med = -1
    elif med < 0:
        med = sources.resolve_dynamic(sc.bv, sc.front_med, sc.back_med, phf[0], phf[1],
                                      phf[2], phf[3], phf[4], phf[5], prm.single, stack, tstack)
    if med < 0:
        phi[0] = 0
        phi[1] = 0
        phi[2] = EXITED
        tally[T_EXITED] += phf[7]
        return False
    phi[0] = med
    phi[1] = h
    return True


@kernel
def run_photons(sc, src, prm, gr, nphoton, rng, tally, leak_traj, leak_info):
    """Simulate ``nphoton`` packets sequentially into one worker's buffers."""
    stack = np.empty(accel.STACK_SIZE, dtype=np.int64)
    tstack = np.empty(accel.STACK_SIZE, dtype=np.float64)
    phf = np.empty(9)
    phi = np.zeros(5, dtype=np.int64)
    ring = np.zeros((leak_traj.shape[1], 4))
    rpos = np.zeros(1, dtype=np.int64)
    stored = 0
    for i in range(nphoton):
        rpos[0] = 0
        alive = launch_photon(sc, src, prm, phf, phi, rng, tally, stack, tstack)
        _push_event(ring, rpos, phf, EV_LAUNCH)
        if not alive:
            continue
        start_med = phi[0]
        leak_med = trace(sc, prm, gr, phf, phi, rng, tally, stack, tstack, ring, rpos)
        if phi[2] == LEAKED and stored < leak_traj.shape[0]:
            m = ring.shape[0]
            n_ev = min(rpos[0], m)
            for j in range(m):
                for c in range(4):
                    leak_traj[stored, j, c] = -1.0 if c == 3 else 0.0
            for j in range(n_ev):
                src_j = (rpos[0] - n_ev + j) % m
                for c in range(4):
                    leak_traj[stored, m - n_ev + j, c] = ring[src_j, c]
            leak_info[stored, 0] = i
            leak_info[stored, 1] = phi[0]
            leak_info[stored, 2] = leak_med
            leak_info[stored, 3] = start_med
            stored += 1
    return stored


# --------------------------------------------------------------------------
# orchestration


@dataclass
class LeakLog:
    """Trajectories of leaked photons: last events as (x, y, z, kind), oldest first."""

    trajectories: np.ndarray
    info: np.ndarray  # photon index within worker, medium held, medium found, start medium
    worker: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, TRAJ_LEN, 4)), np.zeros((0, 4), dtype=np.int64),
                   np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.trajectories)

    def follows_scatter(self):
        """Per leak: was the event before the leak a scattering event?"""
        if len(self) == 0:
            return np.zeros(0, dtype=bool)
        return self.trajectories[:, -2, 3] == EV_SCATTER


@dataclass
class Transport:
    """Bound inputs for the transport kernels."""

    accel_set: AccelSet
    media: np.ndarray
    t_max: float = DEFAULT_TMAX
    precision: str = "double"
    leak_detect: bool = False
    max_events: int = MAX_EVENTS
    delta: float = None

    def __post_init__(self):
        if self.precision not in PRECISIONS:
            raise ValueError(f"unknown precision {self.precision!r}")
        if not self.t_max >= 0:
            raise ValueError("t_max must be non-negative")
        if self.delta is None:
            self.delta = self.accel_set.delta
        if self.delta < 0:
            raise ValueError("retraction length must be non-negative")
        self.media = media_table(self.media) if not isinstance(self.media, np.ndarray) else self.media
        self.scene = self.accel_set.scene_args(self.media)
        self.params = TransportArgs(float(self.delta), float(self.t_max),
                                    self.precision == "single", bool(self.leak_detect),
                                    int(self.max_events))

    def source_args(self, src):
        """Kernel source view; pencil launches in region/tetra sets are located once."""
        if src.dynamic and self.accel_set.cull:
            raise ValueError("dynamic initial medium requires the single strategy")
        if self.accel_set.cull and src.kind == "pencil":
            h = sources.locate_handle(self.accel_set, src.position, src.direction)
            if h < 0:
                raise ValueError("pencil source lies outside every region of the mesh")
            med = int(self.accel_set.as_medium[h])
            if med != src.initial_medium:
                raise ValueError(f"pencil source lies in medium {med}, config says "
                                 f"{src.initial_medium}")
            return src.kernel_args(as_handle=h)
        return src.kernel_args()

    def run(self, src, nphoton, rng, grid, max_leaks=DEFAULT_MAX_LEAKS):
        tally = np.zeros(scoring.N_TALLY)
        traj = np.zeros((max_leaks, TRAJ_LEN, 4))
        info = np.zeros((max_leaks, 4), dtype=np.int64)
        gr = _grid_args(grid)
        stored = run_photons(self.scene, self.source_args(src), self.params, gr, int(nphoton),
                             rng, tally, traj, info)
        return tally, traj[:stored], info[:stored]


def _grid_args(grid):
    if grid.normalized:
        raise ValueError("cannot deposit into a normalized grid")
    o = grid.origin
    return GridArgs(grid.data, float(o[0]), float(o[1]), float(o[2]), float(grid.h))


def default_workers():
    return os.cpu_count() or 1


def worker_counts(nphoton, workers):
    """Even split with the remainder on the last worker."""
    base = nphoton // workers
    counts = [base] * workers
    counts[-1] += nphoton - base * workers
    return counts


def simulate(accel_set, media, source, grid, nphoton, seed=0, workers=None, t_max=DEFAULT_TMAX,
             precision="double", leak_detect=False, max_leaks=DEFAULT_MAX_LEAKS,
             max_events=MAX_EVENTS):
    """Run ``nphoton`` packets over ``workers`` threads.

    Returns (normalized FluenceGrid, Summary, LeakLog).  Results depend only
    on (inputs, seed, workers).
    """
    nphoton = int(nphoton)
    if nphoton < 0:
        raise ValueError("photon count must be non-negative")
    workers = int(workers or default_workers())
    if workers < 1:
        raise ValueError("need at least one worker")
    tr = Transport(accel_set, media, t_max, precision, leak_detect, max_events)
    tr.source_args(source)  # validate before spawning workers
    counts = worker_counts(nphoton, workers)
    grids = [FluenceGrid.like(grid) for _ in range(workers)]
    rngs = [split(seed, k) for k in range(workers)]

    def job(k):
        t0 = time.perf_counter()
        tally, traj, info = tr.run(source, counts[k], rngs[k], grids[k], max_leaks)
        return tally, traj, info, time.perf_counter() - t0

    t0 = time.perf_counter()
    if workers == 1:
        results = [job(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(workers)))
    wall = time.perf_counter() - t0

    summaries = []
    for k, (tally, _, _, _) in enumerate(results):
        grids[k].nphoton = counts[k]
        summaries.append(Summary.from_tally(tally, rng_draws=int(rngs[k][2])))
    summary = scoring.merge_summaries(summaries)
    summary.wall_time = wall
    summary.workers = workers
    merged = scoring.merge_grids(grids)
    leaks = LeakLog(
        np.concatenate([r[1] for r in results]) if results else np.zeros((0, TRAJ_LEN, 4)),
        np.concatenate([r[2] for r in results]) if results else np.zeros((0, 4), dtype=np.int64),
        np.concatenate([np.full(len(r[1]), k, dtype=np.int64) for k, r in enumerate(results)]))
    return scoring.normalize(merged, nphoton), summary, leaks


def run_simulation(cfg):
    """Build everything a config describes and run it: (FluenceGrid, Summary)."""
    mesh = cfg.load_mesh()
    acc = build_accel_set(mesh, cfg.strategy, cfg.delta)
    grid = FluenceGrid(cfg.grid_origin, cfg.grid_h, cfg.grid_dims)
    media = media_table(cfg.media, cfg.exterior)
    fluence, summary, _ = simulate(acc, media, cfg.source, grid, cfg.nphoton, cfg.seed,
                                   cfg.workers, cfg.t_max, cfg.precision, cfg.leak_detect)
    return fluence, summary


# --------------------------------------------------------------------------
# single-photon wrappers


def _default_grid():
    return FluenceGrid(np.zeros(3), 1.0, (1, 1, 1))


def _run_one(fn, tr, ph, grid):
    grid = grid or _default_grid()
    phf, phi = ph.to_arrays()
    rng = ph.rng if ph.rng is not None else split(0, 0)
    tally = np.zeros(scoring.N_TALLY)
    out = fn(tr, phf, phi, rng, tally, _grid_args(grid))
    return PhotonState.from_arrays(phf, phi, rng), tally, out


def handle_miss(ph, transport, length=None, grid=None):
    """Scatter event after a miss: move s/mus (or ``length``) and redirect."""
    mus = transport.media[ph.medium_id, 1]
    if mus <= 0:
        raise ValueError("scattering event requested in a non-scattering medium")
    if length is None:
        length = ph.s / mus

    def fn(tr, phf, phi, rng, tally, gr):
        stack, tstack = tr.accel_set.scratch()
        return scatter_event(tr.scene, gr, tr.params, phf, phi, rng, tally, float(length),
                             stack, tstack)

    new, tally, _ = _run_one(fn, transport, ph, grid)
    return new


def handle_closest_hit(ph, hit, transport, grid=None):
    """Boundary event: ``hit.d_min`` is the restored travel distance."""
    if not 0 <= hit.triangle < transport.accel_set.n_records:
        raise IndexError(f"hit names record {hit.triangle}, which does not exist")

    def fn(tr, phf, phi, rng, tally, gr):
        hit_event(tr.scene, gr, phf, phi, rng, tally, float(hit.d_min), int(hit.triangle),
                  bool(hit.front))

    new, tally, _ = _run_one(fn, transport, ph, grid)
    return new


def cast_photon(ph, transport):
    """The retracted query the loop would issue: (found, L, record, front, dscat)."""
    phf, phi = ph.to_arrays()
    stack, tstack = transport.accel_set.scratch()
    found, length, rec, front, dscat = cast(transport.scene, transport.params, phf, phi,
                                            stack, tstack)
    return bool(found), float(length), int(rec), bool(front), float(dscat)


def trace_photon(ph, transport, grid=None):
    """Run one launched photon to termination; returns (final state, tally)."""

    def fn(tr, phf, phi, rng, tally, gr):
        stack, tstack = tr.accel_set.scratch()
        ring = np.zeros((TRAJ_LEN, 4))
        rpos = np.zeros(1, dtype=np.int64)
        return trace(tr.scene, tr.params, gr, phf, phi, rng, tally, stack, tstack, ring, rpos)

    new, tally, _ = _run_one(fn, transport, ph, grid)
    return new, tally


def launch_one(src, transport, rng):
    """Launch one photon exactly as the batch loop does."""
    phf = np.empty(9)
    phi = np.zeros(5, dtype=np.int64)
    tally = np.zeros(scoring.N_TALLY)
    stack, tstack = transport.accel_set.scratch()
    launch_photon(transport.scene, transport.source_args(src), transport.params, phf, phi,
                  rng, tally, stack, tstack)
    return PhotonState.from_arrays(phf, phi, rng)


@kernel
def _scatter_sites(sc, src, prm, gr, nphoton, rng, out, counts):
    """Scattering-site sequences of the first photons (for cross-strategy checks)."""
    stack = np.empty(accel.STACK_SIZE, dtype=np.int64)
    tstack = np.empty(accel.STACK_SIZE, dtype=np.float64)
    phf = np.empty(9)
    phi = np.zeros(5, dtype=np.int64)
    tally = np.zeros(scoring.N_TALLY)
    weights = np.zeros(nphoton)
    for i in range(nphoton):
        alive = launch_photon(sc, src, prm, phf, phi, rng, tally, stack, tstack)
        k = 0
        events = 0
        while alive and phi[2] == ALIVE and events < prm.max_events:
            events += 1
            med = phi[0]
            budget = (prm.tmax - phf[8]) * C0 / sc.media[med, 3]
            if budget < 0.0:
                budget = 0.0
            found, length, rec, front, dscat = cast(sc, prm, phf, phi, stack, tstack)
            if found:
                if length > budget:
                    _timeout(sc, gr, phf, phi, tally, budget)
                    break
                hit_event(sc, gr, phf, phi, rng, tally, length, rec, front)
            elif sc.media[med, 1] == 0.0:
                phi[2] = EXITED
            elif dscat > budget:
                _timeout(sc, gr, phf, phi, tally, budget)
            else:
                scatter_event(sc, gr, prm, phf, phi, rng, tally, dscat, stack, tstack)
                if phi[2] == ALIVE and k < out.shape[1]:
                    out[i, k, 0] = phf[0]
                    out[i, k, 1] = phf[1]
                    out[i, k, 2] = phf[2]
                    k += 1
        counts[i] = k
        weights[i] = phf[7]
    return weights, tally


def scattering_sites(transport, src, nphoton, seed, max_sites=2000, grid=None):
    """(sites (N, max_sites, 3), counts (N,), terminal weights (N,), tally) for one stream."""
    grid = grid or _default_grid()
    out = np.full((nphoton, max_sites, 3), np.nan)
    counts = np.zeros(nphoton, dtype=np.int64)
    weights, tally = _scatter_sites(transport.scene, transport.source_args(src),
                                    transport.params, _grid_args(grid), int(nphoton),
                                    split(seed, 0), out, counts)
    return out, counts, weights, tally
