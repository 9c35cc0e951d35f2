"""Photon launchers: pencil beam, planar rectangle and axis-aligned volume.

Draw counts per launch are fixed so streams stay auditable: pencil 1
(scattering length only), planar 3, volume 6.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from . import accel
from ._jit import kernel
from .geometry import GRAZE_EPS, PROBE_DIRS
from .photon import PhotonState
from .physics import TWO_PI, next_unit, sample_step

PENCIL = 0
PLANAR = 1
VOLUME = 2
KINDS = {"pencil": PENCIL, "planar": PLANAR, "volume": VOLUME}
DRAWS_PER_LAUNCH = {"pencil": 1, "planar": 3, "volume": 6}

DYNAMIC = "dynamic"


class SourceArgs(NamedTuple):
    """Kernel view of a source; medium -1 means resolve per photon."""

    kind: int
    p0: np.ndarray
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    medium: int
    as_handle: int


def _vec(x, name):
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"source {name} must be three finite numbers")
    return a


@dataclass
class SourceSpec:
    kind: str = "pencil"
    position: np.ndarray = (0.0, 0.0, 0.0)
    direction: np.ndarray = (0.0, 0.0, 1.0)
    edge1: Optional[np.ndarray] = None
    edge2: Optional[np.ndarray] = None
    box_min: Optional[np.ndarray] = None
    box_max: Optional[np.ndarray] = None
    initial_medium: Union[int, str] = DYNAMIC

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        self.position = _vec(self.position, "position")
        d = _vec(self.direction, "direction")
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"source direction must be a unit vector (|v| = {norm:.9g})")
        self.direction = d / norm
        if self.kind == "planar":
            if self.edge1 is None or self.edge2 is None:
                raise ValueError("planar source needs edge1 and edge2")
            self.edge1 = _vec(self.edge1, "edge1")
            self.edge2 = _vec(self.edge2, "edge2")
            cross = np.linalg.norm(np.cross(self.edge1, self.edge2))
            scale = np.linalg.norm(self.edge1) * np.linalg.norm(self.edge2)
            if not cross > 1e-12 * max(scale, 1e-300):
                raise ValueError("planar source edges are degenerate (not linearly independent)")
        if self.kind == "volume":
            if self.box_min is None or self.box_max is None:
                raise ValueError("volume source needs box_min and box_max")
            self.box_min = _vec(self.box_min, "box_min")
            self.box_max = _vec(self.box_max, "box_max")
            if np.any(self.box_max <= self.box_min):
                raise ValueError("volume source box must have positive extent")
        if self.initial_medium != DYNAMIC:
            if isinstance(self.initial_medium, bool) or int(self.initial_medium) != self.initial_medium:
                raise ValueError("initial_medium must be a medium id or 'dynamic'")
            self.initial_medium = int(self.initial_medium)
            if self.initial_medium < 0:
                raise ValueError("initial_medium must be non-negative")

    @property
    def dynamic(self):
        return self.initial_medium == DYNAMIC

    @property
    def draws_per_launch(self):
        return DRAWS_PER_LAUNCH[self.kind]

    def kernel_args(self, medium=None, as_handle=-1):
        z = np.zeros(3)
        if medium is None:
            medium = -1 if self.dynamic else self.initial_medium
        return SourceArgs(
            KINDS[self.kind], self.position.copy(), self.direction.copy(),
            z if self.edge1 is None else self.edge1.copy(),
            z if self.edge2 is None else self.edge2.copy(),
            z if self.box_min is None else self.box_min.copy(),
            z if self.box_max is None else self.box_max.copy(),
            int(medium), int(as_handle))

    def to_json(self):
        out = {"kind": self.kind, "position": self.position.tolist(),
               "direction": self.direction.tolist(), "initial_medium": self.initial_medium}
        for name in ("edge1", "edge2", "box_min", "box_max"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val.tolist()
        return out

    @classmethod
    def from_json(cls, data):
        known = {"kind", "position", "direction", "edge1", "edge2", "box_min", "box_max",
                 "initial_medium"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown source field(s): {', '.join(sorted(extra))}")
        return cls(**data)


# --------------------------------------------------------------------------
# kernels


@kernel
def launch_kernel(src, rng, phf):
    """Fill position, direction, s, w=1 and t=0 for one new packet."""
    if src.kind == PLANAR:
        u1 = next_unit(rng)
        u2 = next_unit(rng)
        for k in range(3):
            phf[k] = src.p0[k] + u1 * src.e1[k] + u2 * src.e2[k]
            phf[3 + k] = src.v0[k]
    elif src.kind == VOLUME:
        for k in range(3):
            u = next_unit(rng)
            phf[k] = src.lo[k] + u * (src.hi[k] - src.lo[k])
        cost = 2.0 * next_unit(rng) - 1.0
        phi = TWO_PI * next_unit(rng)
        sint = math.sqrt(max(0.0, 1.0 - cost * cost))
        phf[3] = sint * math.cos(phi)
        phf[4] = sint * math.sin(phi)
        phf[5] = cost
    else:
        for k in range(3):
            phf[k] = src.p0[k]
            phf[3 + k] = src.v0[k]
    phf[6] = sample_step(next_unit(rng))
    phf[7] = 1.0
    phf[8] = 0.0


@kernel
def resolve_dynamic(bv, front_med, back_med, px, py, pz, vx, vy, vz, single, stack, tstack):
    """Medium on the launch side of the first surface along v; -1 on a miss."""
    dmax = accel.DMAX_SINGLE if single else accel.DMAX_DOUBLE
    found, t, rec, front, u, v = accel.traverse(
        bv, bv.roots[0], px, py, pz, vx, vy, vz, 0.0, dmax, False, single, -1, stack, tstack)
    if not found:
        return -1
    if front:
        return front_med[rec]
    return back_med[rec]


@kernel
def inside_tree(bv, root, px, py, pz, vx, vy, vz, dirs, stack, tstack):
    """Is p enclosed by the outward-wound closed surface of one tree?

    The launch direction is tried first so a point on a shared face belongs
    to the cell the photon is about to enter.
    """
    lo = bv.node_min
    hi = bv.node_max
    if (px < lo[root, 0] or py < lo[root, 1] or pz < lo[root, 2]
            or px > hi[root, 0] or py > hi[root, 1] or pz > hi[root, 2]):
        return False
    inside = False
    for k in range(dirs.shape[0] + 1):
        if k == 0:
            dx, dy, dz = vx, vy, vz
        else:
            dx, dy, dz = dirs[k - 1, 0], dirs[k - 1, 1], dirs[k - 1, 2]
        found, t, rec, front, u, v = accel.traverse(
            bv, root, px, py, pz, dx, dy, dz, 0.0, accel.DMAX_DOUBLE, False, False, -1,
            stack, tstack)
        if not found:
            return False
        inside = not front
        if min(u, v, 1.0 - u - v) > GRAZE_EPS:
            return inside
    return inside


@kernel
def locate_as(bv, px, py, pz, vx, vy, vz, dirs, stack, tstack):
    """First AS whose closed surface encloses p, or -1."""
    for h in range(bv.roots.shape[0]):
        if inside_tree(bv, bv.roots[h], px, py, pz, vx, vy, vz, dirs, stack, tstack):
            return h
    return -1


# --------------------------------------------------------------------------
# Python-facing helpers


def launch(src, rng):
    """New packet at the source; medium_id is -1 when it must be resolved."""
    phf = np.empty(9)
    launch_kernel(src.kernel_args(), rng, phf)
    medium = -1 if src.dynamic else src.initial_medium
    return PhotonState(phf[0:3], phf[3:6], float(phf[6]), 1.0, 0.0, medium, rng)


def resolve_initial_medium(accel_set, p, v, single=False):
    """Launch medium from an auxiliary ray (Single-AS only); None means terminate."""
    if accel_set.strategy != "single":
        raise ValueError("dynamic initial medium is only available with the single strategy")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    stack, tstack = accel_set.scratch()
    med = resolve_dynamic(accel_set.arrays, accel_set.front_med, accel_set.back_med,
                          float(p[0]), float(p[1]), float(p[2]), float(v[0]), float(v[1]),
                          float(v[2]), bool(single), stack, tstack)
    return None if med < 0 else int(med)


def locate_handle(accel_set, p, v):
    """AS handle enclosing p for the region and tetra strategies (-1 if none)."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    stack, tstack = accel_set.scratch()
    return int(locate_as(accel_set.arrays, float(p[0]), float(p[1]), float(p[2]), float(v[0]),
                         float(v[1]), float(v[2]), PROBE_DIRS, stack, tstack))
