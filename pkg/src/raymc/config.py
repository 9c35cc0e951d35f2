"""Run configuration: JSON file plus command-line overrides."""

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .geometry import MeshError, TetMesh, load_mesh
from .physics import EXTERIOR, Medium
from .pipeline import DEFAULT_DELTA, DEFAULT_TMAX, PRECISIONS, STRATEGIES
from .sources import SourceSpec


class ConfigError(ValueError):
    pass


_MEDIUM_KEYS = ("mua", "mus", "g", "n")


def parse_count(value):
    """Photon count from an int, a float with integral value, or a string like '1e6'."""
    if isinstance(value, bool):
        raise ConfigError("photon count must be a number")
    if isinstance(value, str):
        try:
            value = float(value) if any(c in value for c in ".eE") else int(value)
        except ValueError:
            raise ConfigError(f"cannot read photon count {value!r}") from None
    if isinstance(value, float):
        if not value.is_integer():
            raise ConfigError(f"photon count {value!r} is not a whole number")
        value = int(value)
    if not isinstance(value, int):
        raise ConfigError("photon count must be a number")
    if value < 0:
        raise ConfigError("photon count must be non-negative")
    return value


def _medium(obj, where):
    if isinstance(obj, (list, tuple)) and len(obj) == 4:
        vals = obj
    elif isinstance(obj, dict):
        missing = [k for k in _MEDIUM_KEYS if k not in obj]
        if missing:
            raise ConfigError(f"{where}: missing {', '.join(missing)}")
        extra = set(obj) - set(_MEDIUM_KEYS) - {"name"}
        if extra:
            raise ConfigError(f"{where}: unknown field(s) {', '.join(sorted(extra))}")
        vals = [obj[k] for k in _MEDIUM_KEYS]
    else:
        raise ConfigError(f"{where}: expected an object with mua, mus, g, n")
    try:
        return Medium(*(float(v) for v in vals)).validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(eq=False)
class SimConfig:
    mesh: Optional[str] = None
    tet_mesh: Optional[str] = None
    media: list = field(default_factory=list)
    exterior: Medium = EXTERIOR
    source: SourceSpec = field(default_factory=SourceSpec)
    grid_origin: tuple = (0.0, 0.0, 0.0)
    grid_h: float = 1.0
    grid_dims: tuple = (60, 60, 60)
    nphoton: int = 0
    seed: int = 0
    workers: Optional[int] = None
    strategy: str = "single"
    delta: float = DEFAULT_DELTA
    t_max: float = DEFAULT_TMAX
    precision: str = "double"
    leak_detect: bool = False
    output: str = "out"
    slices: list = field(default_factory=list)

    def validate(self):
        if self.mesh is None and self.tet_mesh is None:
            raise ConfigError("config names no mesh file")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {', '.join(STRATEGIES)}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {', '.join(PRECISIONS)}")
        if self.strategy == "tetra" and self.tet_mesh is None:
            raise ConfigError("tetra strategy needs a tetrahedral mesh: set 'tet_mesh' "
                              "(only a surface mesh was given)")
        if not self.media:
            raise ConfigError("media table is empty")
        if self.nphoton < 0:
            raise ConfigError("nphoton must be non-negative")
        if not self.delta >= 0:
            raise ConfigError("delta must be non-negative")
        if not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        if not self.grid_h > 0:
            raise ConfigError("grid h must be positive")
        if len(self.grid_dims) != 3 or min(self.grid_dims) < 1:
            raise ConfigError("grid dims must be three positive integers")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.source.dynamic and self.strategy != "single":
            raise ConfigError("dynamic initial medium requires the single strategy")
        if not self.source.dynamic and self.source.initial_medium > len(self.media):
            raise ConfigError(f"initial medium {self.source.initial_medium} is not defined")
        for s in self.slices:
            if s.get("axis") not in ("x", "y", "z"):
                raise ConfigError("slice axis must be x, y or z")
            k = "xyz".index(s["axis"])
            if not 0 <= int(s.get("index", -1)) < self.grid_dims[k]:
                raise ConfigError(f"slice index outside the grid: {s}")
        return self

    def mesh_path(self):
        """The mesh file the chosen strategy reads."""
        if self.strategy == "tetra" or self.mesh is None:
            return self.tet_mesh
        return self.mesh

    def load_mesh(self):
        path = self.mesh_path()
        mesh = load_mesh(path)
        if self.strategy == "tetra" and not isinstance(mesh, TetMesh):
            raise MeshError(f"{path}: tetra strategy needs a tetrahedral mesh")
        return mesh

    def to_json(self):
        out = {
            "mesh": self.mesh,
            "tet_mesh": self.tet_mesh,
            "media": [dict(zip(_MEDIUM_KEYS, m)) for m in self.media],
            "exterior": dict(zip(_MEDIUM_KEYS, self.exterior)),
            "source": self.source.to_json(),
            "grid": {"origin": list(self.grid_origin), "h": self.grid_h,
                     "dims": list(self.grid_dims)},
            "nphoton": self.nphoton,
            "seed": self.seed,
            "workers": self.workers,
            "strategy": self.strategy,
            "delta": self.delta,
            "t_max": self.t_max,
            "precision": self.precision,
            "leak_detect": self.leak_detect,
            "output": self.output,
            "slices": [dict(s) for s in self.slices],
        }
        return out

    def __eq__(self, other):
        return isinstance(other, SimConfig) and self.to_json() == other.to_json()

    def hash(self):
        """Short digest of everything that determines the result."""
        data = self.to_json()
        data.pop("output")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def provenance(self):
        return {"config_hash": self.hash(), "seed": self.seed, "strategy": self.strategy,
                "precision": self.precision, "delta": self.delta,
                "workers": self.workers}


_TOP_KEYS = {f.name for f in fields(SimConfig)} - {"grid_origin", "grid_h", "grid_dims"} | {"grid"}


def config_from_json(data, base_dir=None):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(extra))}")
    base = Path(base_dir) if base_dir else None

    def path_of(key):
        val = data.get(key)
        if val is None:
            return None
        p = Path(val)
        if base is not None and not p.is_absolute():
            p = base / p
        return str(p)

    try:
        media = [_medium(m, f"media[{i + 1}]") for i, m in enumerate(data.get("media", []))]
        exterior = _medium(data["exterior"], "exterior") if "exterior" in data else EXTERIOR
        try:
            source = SourceSpec.from_json(data.get("source", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"source: {exc}") from None
        grid = data.get("grid", {})
        if not isinstance(grid, dict) or set(grid) - {"origin", "h", "dims"}:
            raise ConfigError("grid must be an object with origin, h, dims")
        workers = data.get("workers")
        cfg = SimConfig(
            mesh=path_of("mesh"),
            tet_mesh=path_of("tet_mesh"),
            media=media,
            exterior=exterior,
            source=source,
            grid_origin=tuple(float(x) for x in grid.get("origin", (0.0, 0.0, 0.0))),
            grid_h=float(grid.get("h", 1.0)),
            grid_dims=tuple(int(x) for x in grid.get("dims", (60, 60, 60))),
            nphoton=parse_count(data.get("nphoton", 0)),
            seed=int(data.get("seed", 0)),
            workers=None if workers is None else int(workers),
            strategy=str(data.get("strategy", "single")),
            delta=float(data.get("delta", DEFAULT_DELTA)),
            t_max=float(data.get("t_max", DEFAULT_TMAX)),
            precision=str(data.get("precision", "double")),
            leak_detect=bool(data.get("leak_detect", False)),
            output=str(data.get("output", "out")),
            slices=[dict(s) for s in data.get("slices", [])],
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    if len(cfg.grid_origin) != 3:
        raise ConfigError("grid origin must have three entries")
    return cfg.validate()


_OVERRIDES = {
    "photons": ("nphoton", parse_count),
    "nphoton": ("nphoton", parse_count),
    "seed": ("seed", int),
    "workers": ("workers", int),
    "strategy": ("strategy", str),
    "delta": ("delta", float),
    "t_max": ("t_max", float),
    "tmax": ("t_max", float),
    "precision": ("precision", str),
    "leak_detect": ("leak_detect", bool),
    "output": ("output", str),
    "mesh": ("mesh", str),
    "tet_mesh": ("tet_mesh", str),
}


def parse_config(path=None, overrides=None, data=None):
    """Validated SimConfig from a file (or dict) with flag overrides applied last."""
    base = None
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        base = path.parent
    data = dict(data or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _OVERRIDES:
            raise ConfigError(f"unknown override {key!r}")
        name, conv = _OVERRIDES[key]
        try:
            data[name] = conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"--{key}: {exc}") from None
    cfg = config_from_json(data, base)
    for key in ("mesh", "tet_mesh"):
        p = getattr(cfg, key)
        if p is not None and not Path(p).exists():
            if key == "tet_mesh" and cfg.strategy == "tetra":
                raise ConfigError(f"tet mesh file not found: {p}")
            raise ConfigError(f"mesh file not found: {p}")
    return cfg


def save_config(cfg, path):
    Path(path).write_text(json.dumps(cfg.to_json(), indent=2))
