import json
import os
import subprocess
import sys

import numpy as np
import pytest

from raymc import bench
from raymc.accel import intersect_closest
from raymc.geometry import ContainmentOracle, closed_surface_flux


def test_names():
    for name in bench.NAMES:
        spec = bench.generate_benchmark(name, level=1)
        assert spec.name == name
        flux, area = closed_surface_flux(spec.surface)
        assert np.linalg.norm(flux) < 1e-9 * area
    with pytest.raises(ValueError):
        bench.generate_benchmark("B3")


def test_b1_media_and_source(b1):
    assert b1.media[0] == bench.B1_SPHERE and b1.media[1] == bench.B1_BACKGROUND
    assert np.array_equal(b1.source.position, [30, 30, 0])
    oracle = ContainmentOracle(b1.surface)
    assert oracle([30, 30, 30]) == 1 and oracle([2, 2, 2]) == 2


def test_b2_shell_media(b2):
    oracle = ContainmentOracle(b2.surface)
    for r, med in [(0, 1), (15, 2), (24, 3), (27, 4)]:
        assert oracle([30 + r, 30.1, 30.2]) == med


def test_b4_reuses_b2_mesh(b2):
    b4 = bench.generate_benchmark("B4")
    assert b4.surface.same_as(b2.surface)
    assert b4.source.kind == "planar" and b4.source.dynamic
    assert np.allclose(b4.source.position + 0.5 * (b4.source.edge1 + b4.source.edge2),
                       [30, 30, 80])


def test_leak_benchmarks_source_on_inclusion_surface():
    for name in ("B5", "B6"):
        spec = bench.generate_benchmark(name)
        oracle = ContainmentOracle(spec.surface)
        p, v = spec.source.position, spec.source.direction
        assert oracle(p + 1e-6 * v) == 2 and oracle(p - 1e-3 * v) == 1
        h = intersect_closest(spec.accel_set().bvhs[0], p, v)
        assert h.d_min < 1e-9 or h.d_min > 20


def test_icosphere_no_vertex_on_axes():
    v, t = bench.unit_icosphere(4)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0)
    assert len(t) == 20 * 4 ** 4
    axes = np.eye(3)
    assert np.max(np.abs(v @ axes.T)) < 1 - 1e-6


def test_radial_deviation_shrinks():
    d = [bench.max_radial_deviation(bench.CENTER, 25.0, k) for k in (2, 3, 4)]
    assert d[0] > d[1] > d[2] > 0
    assert d[2] < 0.05


def test_cube_tet_mesh(cube):
    assert cube.tet.n_tets == 6 * 6 ** 3
    assert cube.tet.signed_volumes().sum() == pytest.approx(60.0 ** 3)


def test_write_config(tmp_path, b1_small):
    cfg_path = b1_small.write(tmp_path, nphoton=7)
    data = json.loads(cfg_path.read_text())
    assert data["nphoton"] == 7 and data["mesh"] == "b1.surface.json"


def test_leak_study_smoke():
    r = bench.leak_study("B5", 200, delta=0.0, precision="single", seed=2, workers=1, level=2)
    assert r.nphoton == 200 and r.summary.balance_error() < 1e-9
    assert r.count == len(r.trajectories) <= 200
    j = r.to_json()
    assert j["benchmark"] == "B5" and j["leaked_count"] == r.count
    with pytest.raises(ValueError):
        bench.leak_study("B1", 1)


def test_jit_benchmark_script_runs(tmp_path):
    root = os.path.dirname(os.path.dirname(__file__))
    script = os.path.join(root, "benchmarks", "bench_jit.py")
    out = subprocess.run([sys.executable, script, "--photons", "3", "--fallback-photons", "1",
                          "--json", str(tmp_path / "b.json")],
                         capture_output=True, text=True, timeout=600)
    assert out.returncode == 0, out.stderr
    res = json.loads((tmp_path / "b.json").read_text())
    assert res["numba"]["events_per_s"] > 0 and res["python"]["events_per_s"] > 0
