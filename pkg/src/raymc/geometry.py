"""Surface and tetrahedral meshes, per-triangle records, region extraction and
point containment.

Conventions: lengths in mm, 0-based indices, medium 0 is the exterior.  The
front face of a triangle is the side its right-handed normal
``(v1 - v0) x (v2 - v0)`` points to.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import accel
from ._jit import kernel

AREA_EPS = 1e-12
VOLUME_EPS = 1e-12
GRAZE_EPS = 1e-9

# outward faces of a positively oriented tetrahedron
TET_FACES = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int64)

_PROBE_DIRS = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.5773502691896258, 0.6172133998483676, 0.5345224838248488],
])
_PROBE_DIRS /= np.linalg.norm(_PROBE_DIRS, axis=1)[:, None]


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TriangleRecord:
    normal: np.ndarray
    area: float
    front_medium: int
    back_medium: int
    adjacent_handle: int = -1


def triangle_record(v0, v1, v2, front_medium=0, back_medium=0, adjacent_handle=-1):
    v0, v1, v2 = (np.asarray(v, dtype=float) for v in (v0, v1, v2))
    c = np.cross(v1 - v0, v2 - v0)
    norm = float(np.linalg.norm(c))
    area = 0.5 * norm
    if area < AREA_EPS:
        raise MeshError(f"degenerate triangle (area {area:.3g} mm^2)")
    return TriangleRecord(c / norm, area, int(front_medium), int(back_medium),
                          int(adjacent_handle))


@dataclass(eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    front_medium: np.ndarray
    back_medium: np.ndarray
    region_id: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.front_medium = np.asarray(self.front_medium, dtype=np.int64).reshape(-1)
        self.back_medium = np.asarray(self.back_medium, dtype=np.int64).reshape(-1)
        if self.region_id is not None:
            self.region_id = np.asarray(self.region_id, dtype=np.int64).reshape(-1)
        self.validate()

    @property
    def n_triangles(self):
        return len(self.triangles)

    def corners(self):
        """(T, 3, 3) vertex coordinates per triangle."""
        return self.vertices[self.triangles]

    def normals_and_areas(self):
        c = self.corners()
        cr = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        norm = np.linalg.norm(cr, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):  # degenerate rows are rejected later
            return cr / norm[:, None], 0.5 * norm

    def validate(self):
        nt = len(self.triangles)
        for name in ("front_medium", "back_medium"):
            if len(getattr(self, name)) != nt:
                raise MeshError(f"{name} has {len(getattr(self, name))} entries for {nt} triangles")
        if self.region_id is not None and len(self.region_id) != nt:
            raise MeshError("region_id length does not match triangle count")
        if nt == 0:
            return
        bad = np.flatnonzero((self.triangles < 0) | (self.triangles >= len(self.vertices)))
        if len(bad):
            raise MeshError(f"triangle {bad[0] // 3} has a vertex index out of range")
        t = self.triangles
        rep = np.flatnonzero((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2]))
        if len(rep):
            raise MeshError(f"triangle {rep[0]} repeats a vertex")
        if np.any(self.front_medium < 0) or np.any(self.back_medium < 0):
            raise MeshError("negative medium label")
        _, area = self.normals_and_areas()
        small = np.flatnonzero(~(area >= AREA_EPS))
        if len(small):
            raise MeshError(f"triangle {small[0]} is degenerate (area {area[small[0]]:.3g} mm^2)")
        _check_duplicate_faces(t, self.front_medium, self.back_medium)

    def to_json(self):
        out = {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "front_medium": self.front_medium.tolist(),
            "back_medium": self.back_medium.tolist(),
        }
        if self.region_id is not None:
            out["region_id"] = self.region_id.tolist()
        return out

    def same_as(self, other):
        return (
            isinstance(other, SurfaceMesh)
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.front_medium, other.front_medium)
            and np.array_equal(self.back_medium, other.back_medium)
        )


def _check_duplicate_faces(tris, front, back):
    key = np.sort(tris, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    for g in np.flatnonzero(counts > 1):
        members = np.flatnonzero(inv == g)
        ref = members[0]
        ref_parity = _parity(tris[ref])
        for m in members[1:]:
            same = _parity(tris[m]) == ref_parity
            if same:
                ok = front[m] == front[ref] and back[m] == back[ref]
            else:
                ok = front[m] == back[ref] and back[m] == front[ref]
            if not ok:
                raise MeshError(f"triangles {ref} and {m} share vertices with conflicting media")


def _parity(tri):
    """Cyclic orientation class of a vertex triple."""
    a, b, c = (int(x) for x in tri)
    k = [a, b, c].index(min(a, b, c))
    rot = [a, b, c][k:] + [a, b, c][:k]
    return rot[1] < rot[2]


@dataclass(eq=False)
class TetMesh:
    vertices: np.ndarray
    tets: np.ndarray
    medium: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.tets = np.array(self.tets, dtype=np.int64).reshape(-1, 4)
        self.medium = np.asarray(self.medium, dtype=np.int64).reshape(-1)
        self._validate_and_orient()
        self.neighbors = self._face_adjacency()

    @property
    def n_tets(self):
        return len(self.tets)

    def signed_volumes(self):
        c = self.vertices[self.tets]
        return np.einsum("ij,ij->i", c[:, 1] - c[:, 0],
                         np.cross(c[:, 2] - c[:, 0], c[:, 3] - c[:, 0])) / 6.0

    def _validate_and_orient(self):
        if len(self.medium) != len(self.tets):
            raise MeshError("medium length does not match tet count")
        bad = np.flatnonzero(np.any((self.tets < 0) | (self.tets >= len(self.vertices)), axis=1))
        if len(bad):
            raise MeshError(f"tet {bad[0]} has a vertex index out of range")
        if np.any(self.medium <= 0):
            raise MeshError("tet medium labels must be positive (0 is the exterior)")
        vol = self.signed_volumes()
        small = np.flatnonzero(~(np.abs(vol) >= VOLUME_EPS))
        if len(small):
            raise MeshError(f"tet {small[0]} is degenerate (volume {vol[small[0]]:.3g} mm^3)")
        neg = vol < 0
        self.tets[neg, 0], self.tets[neg, 1] = self.tets[neg, 1], self.tets[neg, 0].copy()

    def _face_adjacency(self):
        """neighbors[k, f] = tet across face f of tet k, or -1 on the boundary."""
        faces = self.tets[:, TET_FACES].reshape(-1, 3)
        key = np.sort(faces, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.reshape(-1)
        if np.any(counts > 2):
            g = int(np.flatnonzero(counts > 2)[0])
            raise MeshError(f"inconsistent adjacency: a face is shared by {counts[g]} tets")
        nb = np.full(len(faces), -1, dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        sinv = inv[order]
        pair = np.flatnonzero(sinv[1:] == sinv[:-1])
        a, b = order[pair], order[pair + 1]
        nb[a] = b // 4
        nb[b] = a // 4
        return nb.reshape(-1, 4)

    def face_triangles(self):
        """(K, 4, 3) outward-wound vertex indices per tet face."""
        return self.tets[:, TET_FACES]

    def to_json(self):
        return {"vertices": self.vertices.tolist(), "tets": self.tets.tolist(),
                "medium": self.medium.tolist()}


# --------------------------------------------------------------------------
# file I/O


def load_mesh(path, kind=None):
    """Read a mesh JSON file; ``kind`` is 'surface', 'tet' or None to infer."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        raise MeshError(f"{path}: cannot parse mesh JSON ({exc})") from exc
    return mesh_from_json(data, kind, source=str(path))


def mesh_from_json(data, kind=None, source="<mesh>"):
    if kind is None:
        kind = "tet" if "tets" in data else "surface"
    try:
        if kind == "surface":
            return SurfaceMesh(data["vertices"], data["triangles"], data["front_medium"],
                               data["back_medium"], data.get("region_id"))
        if kind == "tet":
            return TetMesh(data["vertices"], data["tets"], data["medium"])
    except KeyError as exc:
        raise MeshError(f"{source}: missing field {exc}") from exc
    except MeshError as exc:
        raise MeshError(f"{source}: {exc}") from exc
    raise ValueError(f"unknown mesh kind {kind!r}")


def save_mesh(mesh, path):
    Path(path).write_text(json.dumps(mesh.to_json()))


def merge_surfaces(meshes):
    """Concatenate surface meshes into one (vertices are not welded)."""
    meshes = list(meshes)
    if len(meshes) == 1:
        return meshes[0]
    verts, tris, front, back = [], [], [], []
    off = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        front.append(m.front_medium)
        back.append(m.back_medium)
        off += len(m.vertices)
    return SurfaceMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(front),
                       np.concatenate(back))


# --------------------------------------------------------------------------
# regions


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, a):
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def labels(self):
        roots = np.array([self.find(i) for i in range(len(self.parent))])
        _, lab = np.unique(roots, return_inverse=True)
        return lab.reshape(-1)


def tet_regions(tm):
    """Label connected same-medium tet groups; returns (region_of_tet, n_regions)."""
    uf = _UnionFind(tm.n_tets)
    k, f = np.nonzero(tm.neighbors >= 0)
    nb = tm.neighbors[k, f]
    same = tm.medium[k] == tm.medium[nb]
    for a, b in zip(k[same], nb[same]):
        uf.union(int(a), int(b))
    lab = uf.labels()
    return lab, int(lab.max()) + 1 if len(lab) else 0


def extract_region_surfaces(tm):
    """Boundary surface of every connected same-medium region of a tet mesh.

    Triangles are wound so front faces point out of the region; a face shared
    by two regions appears in both, with opposite winding.  ``region_id``
    holds, per triangle, the region on the front side (-1 for the exterior).
    """
    region, nreg = tet_regions(tm)
    faces = tm.face_triangles()
    nb = tm.neighbors
    nb_med = np.where(nb >= 0, tm.medium[np.maximum(nb, 0)], 0)
    nb_reg = np.where(nb >= 0, region[np.maximum(nb, 0)], -1)
    own_med = np.repeat(tm.medium[:, None], 4, axis=1)
    own_reg = np.repeat(region[:, None], 4, axis=1)
    boundary = (nb < 0) | (nb_reg != own_reg)
    out = []
    for r in range(nreg):
        sel = boundary & (own_reg == r)
        tris = faces[sel]
        used, inv = np.unique(tris.reshape(-1), return_inverse=True)
        out.append(SurfaceMesh(tm.vertices[used], inv.reshape(-1, 3), nb_med[sel],
                               own_med[sel], nb_reg[sel]))
    return out


def labeled_boundary(tm):
    """All medium-changing faces of a tet mesh, each once, as a labeled surface."""
    faces = tm.face_triangles()
    nb = tm.neighbors
    k, f = np.nonzero(nb < 0)
    ks, fs = np.nonzero(nb >= 0)
    other = nb[ks, fs]
    keep = (tm.medium[ks] != tm.medium[other]) & (ks < other)
    ks, fs, other = ks[keep], fs[keep], other[keep]
    tris = np.concatenate([faces[k, f], faces[ks, fs]])
    front = np.concatenate([np.zeros(len(k), dtype=np.int64), tm.medium[other]])
    back = np.concatenate([tm.medium[k], tm.medium[ks]])
    return SurfaceMesh(tm.vertices, tris, front, back)


@dataclass
class Region:
    medium: int
    triangles: np.ndarray  # indices into the source surface mesh
    flip: np.ndarray  # reverse winding so the front faces out of the region


def surface_regions(sm):
    """Group a labeled surface into closed connected regions, one per volume.

    For each medium the adjacent triangles are oriented outward from it and
    split into edge-connected shells.  Shells enclosing positive volume bound
    a region from outside; negative shells are cavities and join the smallest
    positive shell of the same medium that contains them.  Medium 0 gets no
    region.  Returns (regions, side_region) where side_region[t] = (region
    behind the front face, region behind the back face), -1 for none.
    """
    regions = []
    side = np.full((sm.n_triangles, 2), -1, dtype=np.int64)
    corners = sm.corners()
    media = np.unique(np.concatenate([sm.front_medium, sm.back_medium]))
    for m in media:
        if m == 0:
            continue
        sel = np.flatnonzero(((sm.front_medium == m) | (sm.back_medium == m))
                             & (sm.front_medium != sm.back_medium))
        if len(sel) == 0:
            continue
        flip = sm.front_medium[sel] == m
        shells = _edge_components(sm.triangles[sel])
        pos, neg = [], []
        for s in range(shells.max() + 1):
            members = np.flatnonzero(shells == s)
            c = corners[sel[members]]
            c = np.where(flip[members, None, None], c[:, [0, 2, 1]], c)
            vol = np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0
            (pos if vol > 0 else neg).append((members, c, abs(vol)))
        groups = [[p[0]] for p in pos]
        for members, c, _ in neg:
            probe = c[0, 0]
            best, best_vol = None, np.inf
            for gi, (pm, pc, pvol) in enumerate(pos):
                if pvol < best_vol and _inside_closed(pc, probe):
                    best, best_vol = gi, pvol
            if best is None:
                raise MeshError(f"cavity of medium {m} is not enclosed by any region of it")
            groups[best].append(members)
        for g in groups:
            members = np.concatenate(g)
            ridx = len(regions)
            tri = sel[members]
            fl = flip[members]
            regions.append(Region(int(m), tri, fl))
            side[tri[fl], 0] = ridx
            side[tri[~fl], 1] = ridx
    return regions, side


def _edge_components(tris):
    uf = _UnionFind(len(tris))
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    owner = np.tile(np.arange(len(tris)), 3)
    key = np.sort(edges, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    ks = key[order]
    same = np.all(ks[1:] == ks[:-1], axis=1)
    for i in np.flatnonzero(same):
        uf.union(int(owner[order[i]]), int(owner[order[i + 1]]))
    return uf.labels()


def _inside_closed(corners, p):
    """Nearest-hit test against an outward-wound closed surface."""
    for d in _PROBE_DIRS:
        hit = accel.brute_force_closest(corners, p, d)
        if hit is None:
            return False
        if min(hit.u, hit.v, 1.0 - hit.u - hit.v) > GRAZE_EPS:
            return not hit.front
    return not hit.front


def closed_surface_flux(sm):
    """Sum of area-weighted normals; zero for a closed surface."""
    normals, area = sm.normals_and_areas()
    return (normals * area[:, None]).sum(axis=0), float(area.sum())


# --------------------------------------------------------------------------
# point containment


@kernel
def containment_kernel(bv, front_med, back_med, px, py, pz, dirs, stack, tstack):
    """Medium at p from the label of the nearest surface along a probe ray."""
    med = 0
    for k in range(dirs.shape[0]):
        found, t, rec, front, u, v = accel.traverse(
            bv, bv.roots[0], px, py, pz, dirs[k, 0], dirs[k, 1], dirs[k, 2],
            0.0, accel.DMAX_DOUBLE, False, False, -1, stack, tstack)
        if not found:
            return 0
        med = front_med[rec] if front else back_med[rec]
        if min(u, v, 1.0 - u - v) > GRAZE_EPS:
            return med
    return med


class ContainmentOracle:
    """Reusable point-containment query over one or more labeled surfaces."""

    def __init__(self, surfaces):
        if isinstance(surfaces, SurfaceMesh):
            surfaces = [surfaces]
        self.mesh = merge_surfaces(surfaces)
        self.bvh = accel.build_bvh(self.mesh.corners())
        self.arrays = accel.pack_bvhs([self.bvh])
        self._stack = np.empty(accel.STACK_SIZE, dtype=np.int64)
        self._tstack = np.empty(accel.STACK_SIZE, dtype=np.float64)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return int(containment_kernel(self.arrays, self.mesh.front_medium, self.mesh.back_medium,
                                      float(p[0]), float(p[1]), float(p[2]), _PROBE_DIRS,
                                      self._stack, self._tstack))

    def many(self, points):
        return np.array([self(p) for p in np.asarray(points, dtype=float)], dtype=np.int64)


def point_containment(surfaces, p):
    """Medium id containing p (0 outside every surface)."""
    return ContainmentOracle(surfaces)(p)


PROBE_DIRS = _PROBE_DIRS
