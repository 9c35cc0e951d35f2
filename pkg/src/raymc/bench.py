"""Benchmark domains (cube with inclusions, concentric shells, leak cases)
and the leakage study."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import accel, geometry, pipeline
from .config import SimConfig
from .geometry import SurfaceMesh, TetMesh
from .physics import Medium
from .scoring import FluenceGrid
from .sources import SourceSpec

NAMES = ("B1", "B2", "B4", "B5", "B6", "CUBE")
DEFAULT_LEVEL = 4

# icospheres are turned by this fixed rotation so no vertex or edge sits on
# the coordinate axes through the centre, where the pencil beams run
_ICO_AXIS = np.array([0.3, 0.5, 0.8]) / np.linalg.norm([0.3, 0.5, 0.8])
_ICO_ANGLE = 0.37

_CUBE_TRIS = np.array([
    [0, 2, 1], [0, 3, 2],  # z = lo
    [4, 5, 6], [4, 6, 7],  # z = hi
    [0, 1, 5], [0, 5, 4],  # y = lo
    [3, 7, 6], [3, 6, 2],  # y = hi
    [0, 4, 7], [0, 7, 3],  # x = lo
    [1, 2, 6], [1, 6, 5],  # x = hi
], dtype=np.int64)


def _rotation(axis, angle):
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def unit_icosphere(level=DEFAULT_LEVEL):
    """(vertices, triangles) of a subdivided icosahedron on the unit sphere, outward wound."""
    p = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0], [0, -1, p], [0, 1, p],
             [0, -1, -p], [0, 1, -p], [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
             [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
             [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    v = np.array(verts) @ _rotation(_ICO_AXIS, _ICO_ANGLE).T
    return v, np.array(faces, dtype=np.int64)


def sphere_surface(center, radius, inside, outside, level=DEFAULT_LEVEL):
    v, t = unit_icosphere(level)
    v = np.asarray(center, dtype=float) + radius * v
    n = len(t)
    return SurfaceMesh(v, t, np.full(n, outside), np.full(n, inside))


def box_surface(lo, hi, inside, outside):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corners = np.array([[lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]], [hi[0], hi[1], lo[2]],
                        [lo[0], hi[1], lo[2]], [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]],
                        [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]]])
    return SurfaceMesh(corners, _CUBE_TRIS, np.full(12, outside), np.full(12, inside))


# the six tetrahedra of a unit cell sharing its main diagonal (corner bits x, y, z)
_KUHN = [(0, 1, 3, 7), (0, 1, 5, 7), (0, 2, 3, 7), (0, 2, 6, 7), (0, 4, 5, 7), (0, 4, 6, 7)]


def structured_tet_box(lo, hi, cells, medium=1):
    """Conforming six-tets-per-cell decomposition of an axis-aligned box."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    cells = np.broadcast_to(np.asarray(cells, dtype=np.int64), (3,))
    axes = [np.linspace(lo[k], hi[k], cells[k] + 1) for k in range(3)]
    nx, ny, nz = cells + 1
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def vid(i, j, k):
        return (i * ny + j) * nz + k

    tets = []
    for i in range(cells[0]):
        for j in range(cells[1]):
            for k in range(cells[2]):
                corner = [vid(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1))
                          for b in range(8)]
                tets += [[corner[a] for a in kt] for kt in _KUHN]
    tets = np.array(tets, dtype=np.int64)
    return TetMesh(verts, tets, np.full(len(tets), medium))


# --------------------------------------------------------------------------
# benchmark specs

B1_SPHERE = Medium(0.01, 10.0, 0.0, 1.0)
B1_BACKGROUND = Medium(0.005, 1.0, 0.0, 1.37)
B2_INNER = Medium(0.05, 0.0, 1.0, 1.0)
B2_GRAY = Medium(0.02, 9.0, 0.89, 1.37)
B2_CSF = Medium(0.004, 0.009, 0.89, 1.37)
B2_SCALP = Medium(0.019, 7.8, 0.89, 1.37)
AIR = Medium(0.0, 0.0, 1.0, 1.0)
INCLUSION = Medium(0.005, 10.0, 0.9, 1.37)

CENTER = (30.0, 30.0, 30.0)


@dataclass
class BenchmarkSpec:
    name: str
    surface: SurfaceMesh
    media: list
    source: SourceSpec
    tet: Optional[TetMesh] = None
    grid_origin: tuple = (0.0, 0.0, 0.0)
    grid_h: float = 1.0
    grid_dims: tuple = (60, 60, 60)
    notes: dict = field(default_factory=dict)

    def mesh_for(self, strategy):
        if strategy == "tetra":
            if self.tet is None:
                raise geometry.MeshError(f"{self.name} has no built-in tetrahedral mesh")
            return self.tet
        return self.surface

    def grid(self):
        return FluenceGrid(self.grid_origin, self.grid_h, self.grid_dims)

    def accel_set(self, strategy="single", delta=pipeline.DEFAULT_DELTA):
        return pipeline.build_accel_set(self.mesh_for(strategy), strategy, delta)

    def config(self, mesh_path, tet_path=None, **kw):
        cfg = SimConfig(mesh=str(mesh_path), tet_mesh=None if tet_path is None else str(tet_path),
                        media=list(self.media), source=self.source,
                        grid_origin=tuple(self.grid_origin), grid_h=self.grid_h,
                        grid_dims=tuple(self.grid_dims))
        for k, v in kw.items():
            setattr(cfg, k, v)
        return cfg.validate()

    def write(self, outdir, **kw):
        """Mesh and config JSON files; returns the config path."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        mesh_path = outdir / f"{self.name.lower()}.surface.json"
        geometry.save_mesh(self.surface, mesh_path)
        tet_path = None
        if self.tet is not None:
            tet_path = outdir / f"{self.name.lower()}.tet.json"
            geometry.save_mesh(self.tet, tet_path)
        kw.setdefault("output", str(outdir / self.name.lower()))
        cfg = self.config(mesh_path.name, None if tet_path is None else tet_path.name, **kw)
        cfg_path = outdir / f"{self.name.lower()}.config.json"
        cfg_path.write_text(json.dumps(cfg.to_json(), indent=2))
        return cfg_path


def _b2_surface(level):
    return geometry.merge_surfaces([
        box_surface((0, 0, 0), (60, 60, 60), inside=4, outside=0),
        sphere_surface(CENTER, 25.0, inside=3, outside=4, level=level),
        sphere_surface(CENTER, 23.0, inside=2, outside=3, level=level),
        sphere_surface(CENTER, 10.0, inside=1, outside=2, level=level),
    ])


def generate_benchmark(name, level=DEFAULT_LEVEL, cube_cells=6):
    name = name.upper()
    if name == "B1":
        surf = geometry.merge_surfaces([
            box_surface((0, 0, 0), (60, 60, 60), inside=2, outside=0),
            sphere_surface(CENTER, 25.0, inside=1, outside=2, level=level),
        ])
        src = SourceSpec("pencil", (30.0, 30.0, 0.0), (0.0, 0.0, 1.0), initial_medium=2)
        return BenchmarkSpec("B1", surf, [B1_SPHERE, B1_BACKGROUND], src)
    if name == "B2":
        src = SourceSpec("pencil", (30.0, 30.0, 0.0), (0.0, 0.0, 1.0), initial_medium=4)
        return BenchmarkSpec("B2", _b2_surface(level), [B2_INNER, B2_GRAY, B2_CSF, B2_SCALP], src)
    if name == "B4":
        src = SourceSpec("planar", (22.5, 22.5, 80.0), (0.0, 0.0, -1.0), edge1=(15.0, 0.0, 0.0),
                         edge2=(0.0, 15.0, 0.0), initial_medium="dynamic")
        return BenchmarkSpec("B4", _b2_surface(level), [B2_INNER, B2_GRAY, B2_CSF, B2_SCALP], src)
    if name in ("B5", "B6"):
        outer = box_surface((0, 0, 0), (60, 60, 60), inside=1, outside=0)
        if name == "B5":
            inner = box_surface((15, 15, 15), (45, 45, 45), inside=2, outside=1)
        else:
            inner = sphere_surface(CENTER, 15.0, inside=2, outside=1, level=level)
        z0 = 15.0
        if name == "B6":
            # the flat facets sit inside the true sphere, so the pole point is in air;
            # start the beam where its axis meets the tessellated surface instead
            hit = accel.brute_force_closest(inner.corners(), (30.0, 30.0, 0.0), (0.0, 0.0, 1.0))
            z0 = hit.d_min
        src = SourceSpec("pencil", (30.0, 30.0, z0), (0.0, 0.0, 1.0), initial_medium=2)
        return BenchmarkSpec(name, geometry.merge_surfaces([outer, inner]), [AIR, INCLUSION], src)
    if name == "CUBE":
        surf = box_surface((0, 0, 0), (60, 60, 60), inside=1, outside=0)
        tet = structured_tet_box((0, 0, 0), (60, 60, 60), cube_cells, medium=1)
        # off-axis so the beam does not run along tetrahedron edges
        src = SourceSpec("pencil", (29.3, 30.7, 0.0), (0.0, 0.0, 1.0), initial_medium=1)
        return BenchmarkSpec("CUBE", surf, [B1_BACKGROUND], src, tet=tet)
    raise ValueError(f"unknown benchmark {name!r} (expected one of {', '.join(NAMES)})")


def max_radial_deviation(center, radius, level=DEFAULT_LEVEL):
    """Largest distance between the tessellated sphere surface and the true sphere.

    Vertices lie on the sphere; the deepest point of a flat triangle is the
    foot of the perpendicular from the centre onto its plane.
    """
    v, t = unit_icosphere(level)
    c = v[t]
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    n /= np.linalg.norm(n, axis=1)[:, None]
    depth = np.abs(np.einsum("ij,ij->i", n, c[:, 0]))
    return float(radius * (1.0 - depth.min()))


# --------------------------------------------------------------------------
# leakage study


@dataclass
class LeakReport:
    name: str
    nphoton: int
    delta: float
    precision: str
    count: int
    fraction: float
    after_scatter: float  # share of recorded leaks whose previous event was a scatter
    trajectories: np.ndarray
    info: np.ndarray
    summary: object = None

    def to_json(self):
        return {
            "benchmark": self.name,
            "nphoton": self.nphoton,
            "delta": self.delta,
            "precision": self.precision,
            "leaked_count": self.count,
            "leaked_fraction": self.fraction,
            "after_scatter_fraction": self.after_scatter,
            "recorded": int(len(self.trajectories)),
            "trajectories": [
                {"photon": int(i[0]), "medium_held": int(i[1]), "medium_found": int(i[2]),
                 "events": [{"x": e[0], "y": e[1], "z": e[2], "kind": int(e[3])}
                            for e in traj.tolist() if e[3] >= 0]}
                for traj, i in zip(self.trajectories, self.info)
            ],
            "summary": None if self.summary is None else self.summary.to_json(),
        }


def leak_study(name, nphoton, delta=0.0, precision="single", seed=1, workers=None,
               level=DEFAULT_LEVEL, max_leaks=pipeline.DEFAULT_MAX_LEAKS):
    name = name.upper()
    if name not in ("B5", "B6"):
        raise ValueError("leak study runs on B5 or B6")
    spec = generate_benchmark(name, level)
    acc = spec.accel_set("single", delta)
    _, summary, leaks = pipeline.simulate(acc, spec.media, spec.source, spec.grid(), nphoton,
                                          seed, workers, precision=precision, leak_detect=True,
                                          max_leaks=max_leaks)
    follows = leaks.follows_scatter()
    return LeakReport(name, int(nphoton), float(delta), precision, summary.leaked_count,
                      summary.leaked_count / nphoton if nphoton else 0.0,
                      float(follows.mean()) if len(follows) else 1.0,
                      leaks.trajectories, leaks.info, summary)
