"""Monte Carlo photon transport through triangle-surface domains driven by
closest-hit ray queries."""

from .accel import Aabb, Bvh, Hit, brute_force_closest, build_bvh, intersect_closest
from .geometry import (MeshError, SurfaceMesh, TetMesh, extract_region_surfaces, load_mesh,
                       point_containment)
from .photon import PhotonState
from .physics import Medium, fresnel_reflectance, reflect, refract, sample_hg, split
from .pipeline import AccelSet, build_accel_set, run_simulation, simulate
from .scoring import FluenceGrid, Summary
from .sources import SourceSpec

__version__ = "0.1.0"
