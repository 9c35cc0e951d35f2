import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from raymc import accel
from raymc.accel import (Aabb, brute_force_batch, brute_force_closest, build_bvh,
                         intersect_batch, intersect_closest, validate_bvh)

UNIT_TRI = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])


def test_single_triangle_front_hit():
    bvh = build_bvh(UNIT_TRI)
    h = intersect_closest(bvh, [0.2, 0.2, 1.0], [0, 0, -1.0])
    assert h.triangle == 0 and h.front and h.d_min == pytest.approx(1.0)
    assert h.face == "front"


def test_back_face_and_culling():
    bvh = build_bvh(UNIT_TRI)
    h = intersect_closest(bvh, [0.2, 0.2, -1.0], [0, 0, 1.0])
    assert not h.front
    assert intersect_closest(bvh, [0.2, 0.2, 1.0], [0, 0, -1.0], cull_front=True) is None
    assert intersect_closest(bvh, [0.2, 0.2, -1.0], [0, 0, 1.0], cull_front=True) is not None


def test_dmax_is_inclusive_and_zero_excluded():
    bvh = build_bvh(UNIT_TRI)
    assert intersect_closest(bvh, [0.2, 0.2, 1.0], [0, 0, -1.0], d_max=1.0) is not None
    assert intersect_closest(bvh, [0.2, 0.2, 1.0], [0, 0, -1.0], d_max=0.999) is None
    assert intersect_closest(bvh, [0.2, 0.2, 0.0], [0, 0, -1.0]) is None


def test_parallel_ray_misses():
    bvh = build_bvh(UNIT_TRI)
    assert intersect_closest(bvh, [-1, 0.2, 0.0], [1.0, 0, 0]) is None


def test_tie_goes_to_lowest_index():
    tris = np.concatenate([UNIT_TRI, UNIT_TRI + [0, 0, 0], UNIT_TRI[:, ::-1]])
    h = intersect_closest(build_bvh(tris), [0.2, 0.2, 1.0], [0, 0, -1.0])
    assert h.triangle == 0
    assert brute_force_closest(tris, [0.2, 0.2, 1.0], [0, 0, -1.0]).triangle == 0


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        build_bvh(np.zeros((0, 3, 3)))
    with pytest.raises(ValueError):
        build_bvh(np.zeros((4, 3)))
    bvh = build_bvh(UNIT_TRI)
    with pytest.raises(ValueError):
        intersect_closest(bvh, [0, 0, 1], [0, 0, -2.0])
    with pytest.raises(ValueError):
        intersect_closest(bvh, [0, 0, 1], [0, 0, -1.0], d_max=-1)


def test_structure_on_sphere(b1):
    bvh = build_bvh(b1.surface.corners())
    assert validate_bvh(bvh)
    assert bvh.depth <= accel.MAX_DEPTH
    leaves = bvh.left < 0
    assert bvh.count[leaves].max() <= accel.LEAF_SIZE


def test_degenerate_stack_stays_within_depth():
    # many identical centroids force the median fallback
    rng = np.random.default_rng(0)
    tris = np.repeat(UNIT_TRI, 3000, axis=0) + rng.normal(scale=1e-12, size=(3000, 3, 3))
    bvh = build_bvh(tris)
    assert validate_bvh(bvh) and bvh.depth <= accel.MAX_DEPTH


@given(st.integers(1, 60), st.integers(0, 2 ** 31))
def test_bvh_matches_reference(n, seed):
    rng = np.random.default_rng(seed)
    tris = oracles.random_scene(rng, n)
    bvh = build_bvh(tris)
    validate_bvh(bvh)
    o, d = oracles.random_rays(rng, 20)
    t, rec, front = intersect_batch(bvh, o, d)
    for i in range(20):
        hit, k, f, tt = oracles.closest_hit(tris, o[i], d[i])
        assert rec[i] == k
        if hit:
            assert front[i] == f and abs(t[i] - tt) < 1e-9


def test_bvh_matches_brute_force_on_sphere(b1):
    tris = b1.surface.corners()
    bvh = build_bvh(tris)
    rng = np.random.default_rng(3)
    o, d = oracles.random_rays(rng, 5000, -5.0, 65.0)
    for cull in (False, True):
        a = intersect_batch(bvh, o, d, cull_front=cull)
        b = brute_force_batch(tris, o, d, cull_front=cull)
        assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])
        assert np.max(np.abs(a[0] - b[0])) < 1e-9


def test_single_precision_mode_agrees_mostly(b1):
    tris = b1.surface.corners()
    bvh = build_bvh(tris)
    o, d = oracles.random_rays(np.random.default_rng(4), 2000, 1.0, 59.0)
    t64, r64, _ = intersect_batch(bvh, o, d)
    t32, r32, _ = intersect_batch(bvh, o, d, single=True)
    assert np.mean(r64 == r32) > 0.995
    same = r64 == r32
    assert np.max(np.abs(t64[same] - t32[same])) < 1e-3
    tb, rb, _ = brute_force_batch(tris, o, d, single=True)
    assert np.array_equal(rb, r32)


def test_aabb_helpers():
    box = Aabb.of_points([[0, 0, 0], [1, 2, 3]])
    assert box.contains([0.5, 1, 1]) and not box.contains([2, 0, 0])
    assert Aabb.empty().is_empty
    assert np.array_equal(Aabb.empty().union(box).max, [1, 2, 3])


def test_inv_dir_zero_components():
    inv = [accel.inv_dir(c) for c in (0.0, -0.0, 2.0)]
    assert np.all(np.isfinite(inv)) and inv[2] == 0.5


def test_pack_preserves_records():
    a = build_bvh(UNIT_TRI)
    b = build_bvh(UNIT_TRI + [0, 0, 2.0], handle=1)
    arr = accel.pack_bvhs([a, b])
    assert list(arr.roots) == [0, 1]
    assert sorted(arr.prim.tolist()) == [0, 1]
