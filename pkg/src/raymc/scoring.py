"""Voxel fluence accumulation and run tallies.

The output grid is independent of the simulation mesh.  Each straight path
segment is split exactly at voxel faces (parametric grid stepping) and every
piece adds its path-integrated weight to the voxel it lies in.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._jit import kernel
from .physics import attenuate

# tally slots shared with the transport kernels
T_LAUNCHED = 0
T_ABSORBED = 1
T_EXITED = 2
T_TIMEOUT = 3
T_LEAKED_W = 4
T_LEAKED_N = 5
T_PHOTONS = 6
T_SCATTER = 7
T_BOUNDARY = 8
T_FRESNEL = 9  # boundary events that drew a reflection coin
N_TALLY = 10


@kernel
def deposit(acc, gx, gy, gz, h, ax, ay, az, bx, by, bz, w, mua):
    """Score segment a->b into ``acc``; return the weight left at b.

    Parts of the segment outside the grid attenuate but score nothing.
    """
    dx = bx - ax
    dy = by - ay
    dz = bz - az
    length = math.sqrt(dx * dx + dy * dy + dz * dz)
    if length == 0.0:
        return w
    dx /= length
    dy /= length
    dz /= length
    nx = acc.shape[0]
    ny = acc.shape[1]
    nz = acc.shape[2]

    t_in = 0.0
    t_out = length
    inside = True
    if dx != 0.0:
        t0 = (gx - ax) / dx
        t1 = (gx + nx * h - ax) / dx
        if t0 > t1:
            t0, t1 = t1, t0
        t_in = max(t_in, t0)
        t_out = min(t_out, t1)
    elif ax < gx or ax > gx + nx * h:
        inside = False
    if dy != 0.0:
        t0 = (gy - ay) / dy
        t1 = (gy + ny * h - ay) / dy
        if t0 > t1:
            t0, t1 = t1, t0
        t_in = max(t_in, t0)
        t_out = min(t_out, t1)
    elif ay < gy or ay > gy + ny * h:
        inside = False
    if dz != 0.0:
        t0 = (gz - az) / dz
        t1 = (gz + nz * h - az) / dz
        if t0 > t1:
            t0, t1 = t1, t0
        t_in = max(t_in, t0)
        t_out = min(t_out, t1)
    elif az < gz or az > gz + nz * h:
        inside = False
    if not inside or t_in >= t_out:
        return attenuate(w, mua, length)[0]

    if t_in > 0.0:
        w = attenuate(w, mua, t_in)[0]
    ix = min(max(int(math.floor((ax + dx * t_in - gx) / h)), 0), nx - 1)
    iy = min(max(int(math.floor((ay + dy * t_in - gy) / h)), 0), ny - 1)
    iz = min(max(int(math.floor((az + dz * t_in - gz) / h)), 0), nz - 1)

    inf = math.inf
    sx = 0
    sy = 0
    sz = 0
    nxt_x = inf
    nxt_y = inf
    nxt_z = inf
    del_x = inf
    del_y = inf
    del_z = inf
    if dx > 0.0:
        sx = 1
        nxt_x = (gx + (ix + 1) * h - ax) / dx
        del_x = h / dx
    elif dx < 0.0:
        sx = -1
        nxt_x = (gx + ix * h - ax) / dx
        del_x = -h / dx
    if dy > 0.0:
        sy = 1
        nxt_y = (gy + (iy + 1) * h - ay) / dy
        del_y = h / dy
    elif dy < 0.0:
        sy = -1
        nxt_y = (gy + iy * h - ay) / dy
        del_y = -h / dy
    if dz > 0.0:
        sz = 1
        nxt_z = (gz + (iz + 1) * h - az) / dz
        del_z = h / dz
    elif dz < 0.0:
        sz = -1
        nxt_z = (gz + iz * h - az) / dz
        del_z = -h / dz

    t = t_in
    while True:
        tn = min(nxt_x, nxt_y, nxt_z, t_out)
        if tn < t:
            tn = t
        w, phi = attenuate(w, mua, tn - t)
        acc[ix, iy, iz] += phi
        t = tn
        if t >= t_out:
            break
        if nxt_x <= nxt_y and nxt_x <= nxt_z:
            ix += sx
            nxt_x += del_x
            if ix < 0 or ix >= nx:
                break
        elif nxt_y <= nxt_z:
            iy += sy
            nxt_y += del_y
            if iy < 0 or iy >= ny:
                break
        else:
            iz += sz
            nxt_z += del_z
            if iz < 0 or iz >= nz:
                break
    if t < length:
        w = attenuate(w, mua, length - t)[0]
    return w


@kernel
def segment_pieces(gx, gy, gz, h, nx, ny, nz, ax, ay, az, bx, by, bz):
    """Total in-grid length and piece count of a segment (for partition checks)."""
    acc = np.zeros((nx, ny, nz))
    deposit(acc, gx, gy, gz, h, ax, ay, az, bx, by, bz, 1.0, 0.0)
    return acc.sum(), np.count_nonzero(acc)


@dataclass
class FluenceGrid:
    origin: np.ndarray
    h: float
    dims: tuple
    data: np.ndarray = None
    nphoton: int = 0
    normalized: bool = False

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        if not self.h > 0:
            raise ValueError("voxel size must be positive")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError("grid dims must be three positive integers")
        if self.data is None:
            self.data = np.zeros(self.dims)

    @classmethod
    def like(cls, other):
        return cls(other.origin.copy(), other.h, other.dims)

    def same_geometry(self, other):
        return (np.array_equal(self.origin, other.origin) and self.h == other.h
                and self.dims == other.dims)

    def deposit_segment(self, p0, p1, w_enter, mua):
        if self.normalized:
            raise ValueError("cannot deposit into a normalized grid")
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        return deposit(self.data, *map(float, self.origin), float(self.h), *map(float, p0),
                       *map(float, p1), float(w_enter), float(mua))

    def voxel_of(self, p):
        return tuple(int(i) for i in np.floor((np.asarray(p) - self.origin) / self.h))

    def centers(self, axis):
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.h

    def total_path_weight(self):
        return float(self.data.sum())


def deposit_segment(grid, p0, p1, w_enter, mua):
    return grid.deposit_segment(p0, p1, w_enter, mua)


def normalize(grid, nphoton):
    """Fluence (mm^-2) per unit launched weight."""
    if grid.normalized:
        raise ValueError("grid is already normalized")
    out = FluenceGrid(grid.origin.copy(), grid.h, grid.dims, grid.data.copy(), int(nphoton), True)
    if nphoton > 0:
        out.data /= grid.h ** 3 * nphoton
    return out


def merge_grids(grids):
    grids = list(grids)
    if not grids:
        raise ValueError("nothing to merge")
    out = FluenceGrid.like(grids[0])
    for g in grids:
        if not g.same_geometry(out):
            raise ValueError("grid geometry mismatch")
        if g.normalized:
            raise ValueError("cannot merge normalized grids")
        out.data += g.data
        out.nphoton += g.nphoton
    return out


@dataclass
class Summary:
    launched_weight: float = 0.0
    absorbed_weight: float = 0.0
    exited_weight: float = 0.0
    timed_out_weight: float = 0.0
    leaked_weight: float = 0.0
    leaked_count: int = 0
    photons: int = 0
    scatter_events: int = 0
    boundary_events: int = 0
    fresnel_draws: int = 0
    rng_draws: int = 0
    wall_time: float = 0.0
    workers: int = 1
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_tally(cls, tally, rng_draws=0, wall_time=0.0, workers=1):
        return cls(
            launched_weight=float(tally[T_LAUNCHED]),
            absorbed_weight=float(tally[T_ABSORBED]),
            exited_weight=float(tally[T_EXITED]),
            timed_out_weight=float(tally[T_TIMEOUT]),
            leaked_weight=float(tally[T_LEAKED_W]),
            leaked_count=int(tally[T_LEAKED_N]),
            photons=int(tally[T_PHOTONS]),
            scatter_events=int(tally[T_SCATTER]),
            boundary_events=int(tally[T_BOUNDARY]),
            fresnel_draws=int(tally[T_FRESNEL]),
            rng_draws=int(rng_draws),
            wall_time=wall_time,
            workers=workers,
        )

    @property
    def accounted_weight(self):
        return self.absorbed_weight + self.exited_weight + self.timed_out_weight + self.leaked_weight

    def balance_error(self):
        """|launched - accounted| / launched (0 for an empty run)."""
        if self.launched_weight == 0:
            return abs(self.accounted_weight)
        return abs(self.launched_weight - self.accounted_weight) / self.launched_weight

    def to_json(self):
        return asdict(self)


def merge_summaries(summaries):
    summaries = list(summaries)
    out = Summary(workers=len(summaries))
    for s in summaries:
        out.launched_weight += s.launched_weight
        out.absorbed_weight += s.absorbed_weight
        out.exited_weight += s.exited_weight
        out.timed_out_weight += s.timed_out_weight
        out.leaked_weight += s.leaked_weight
        out.leaked_count += s.leaked_count
        out.photons += s.photons
        out.scatter_events += s.scatter_events
        out.boundary_events += s.boundary_events
        out.fresnel_draws += s.fresnel_draws
        out.rng_draws += s.rng_draws
        out.wall_time = max(out.wall_time, s.wall_time)
    return out


# --------------------------------------------------------------------------
# output files


def write_volume(prefix, grid, provenance=None):
    """Raw little-endian float32 volume (x fastest) plus a JSON header."""
    prefix = Path(prefix)
    raw = prefix.with_name(prefix.name + ".fluence.bin")
    header = {
        "origin": grid.origin.tolist(),
        "h": grid.h,
        "dims": list(grid.dims),
        "nphoton": grid.nphoton,
        "units": "mm^-2" if grid.normalized else "mm",
        "byte_order": "little",
        "dtype": "f32",
        "data_file": raw.name,
    }
    header.update(provenance or {})
    grid.data.astype("<f4").ravel(order="F").tofile(raw)
    hdr = prefix.with_name(prefix.name + ".fluence.json")
    hdr.write_text(json.dumps(header, indent=2))
    return raw, hdr


def read_volume(header_path):
    header_path = Path(header_path)
    hdr = json.loads(header_path.read_text())
    data = np.fromfile(header_path.with_name(hdr["data_file"]), dtype="<f4")
    data = data.reshape(hdr["dims"], order="F").astype(np.float64)
    return hdr, data


def write_summary(prefix, summary, provenance=None):
    prefix = Path(prefix)
    out = summary.to_json()
    out.update(provenance or {})
    path = prefix.with_name(prefix.name + ".summary.json")
    path.write_text(json.dumps(out, indent=2))
    return path


def write_slice_csv(prefix, grid, axis, index):
    """One plane of the grid as CSV rows (two in-plane coordinates and value)."""
    names = "xyz"
    axis = names.index(axis) if isinstance(axis, str) else int(axis)
    if not 0 <= index < grid.dims[axis]:
        raise ValueError(f"slice {names[axis]}={index} outside grid")
    plane = np.take(grid.data, index, axis=axis)
    a, b = [k for k in range(3) if k != axis]
    ca, cb = grid.centers(a), grid.centers(b)
    path = Path(prefix)
    path = path.with_name(f"{path.name}.slice_{names[axis]}{index}.csv")
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([names[a], names[b], "value"])
        for i in range(len(ca)):
            for j in range(len(cb)):
                wr.writerow([f"{ca[i]:.6g}", f"{cb[j]:.6g}", f"{plane[i, j]:.9g}"])
    return path
