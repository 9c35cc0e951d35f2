import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from raymc import physics
from raymc.physics import (C0, Medium, attenuate, advance_time, fill_hg, fill_steps, fill_units,
                           fresnel, fresnel_reflectance, hg_cos_theta, make_rng, next_u64,
                           next_unit, reflect, refract, rotate, sample_hg, sample_step, split)

unit_f = st.floats(0.0, 1.0, exclude_max=True)
angle = st.floats(0.0, math.pi / 2 - 1e-6)
index = st.floats(1.0, 2.5)


def unit_vectors():
    return st.tuples(st.floats(-1, 1), st.floats(0, 2 * math.pi)).map(
        lambda a: np.array([math.sqrt(1 - a[0] ** 2) * math.cos(a[1]),
                            math.sqrt(1 - a[0] ** 2) * math.sin(a[1]), a[0]]))


# --------------------------------------------------------------------------
# generator


def test_xorshift_matches_reference_sequence():
    rng = make_rng(1, 2)
    got = [int(next_u64(rng)) for _ in range(100)]
    want, state = oracles.xorshift128p(1, 2, 100)
    assert got == want
    assert (int(rng[0]), int(rng[1])) == state
    assert int(rng[2]) == 100


def test_xorshift_known_values():
    rng = make_rng(1, 2)
    assert [int(next_u64(rng)) for _ in range(3)] == [3, 8388645, 33816707]


def test_zero_state_rejected():
    with pytest.raises(ValueError):
        make_rng(0, 0)


def test_split_streams_are_distinct_and_reproducible():
    a, b = split(7, 0), split(7, 1)
    assert not np.array_equal(a[:2], b[:2])
    assert np.array_equal(split(7, 0), a)
    xa = [int(next_u64(a)) for _ in range(1000)]
    xb = [int(next_u64(b)) for _ in range(1000)]
    assert not set(xa) & set(xb)


def test_split_differs_by_seed():
    assert not np.array_equal(split(1, 0)[:2], split(2, 0)[:2])


def test_unit_range_and_draw_count():
    rng = split(3, 0)
    u = np.empty(10000)
    fill_units(rng, u)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert int(rng[2]) == 10000


def test_unit_top_53_bits():
    rng = make_rng(5, 9)
    raw = make_rng(5, 9)
    for _ in range(10):
        assert next_unit(rng) == (int(next_u64(raw)) >> 11) * 2.0 ** -53


# --------------------------------------------------------------------------
# sampling


def test_step_zero_is_finite():
    assert sample_step(0.0) == pytest.approx(53 * math.log(2))


@given(unit_f)
def test_step_nonnegative(u):
    assert sample_step(u) >= 0.0


@pytest.mark.parametrize("g", [-0.9, -0.5, 0.0, 0.5, 0.9, 0.99])
def test_hg_endpoints(g):
    assert hg_cos_theta(g, 0.0) == pytest.approx(-1.0, abs=1e-12)
    assert hg_cos_theta(g, 1.0 - 1e-16) == pytest.approx(1.0, abs=1e-9)


@given(st.floats(-0.99, 0.99), unit_f)
def test_hg_in_range_and_monotone(g, u):
    c = hg_cos_theta(g, u)
    assert -1.0 <= c <= 1.0
    if u + 1e-3 < 1.0:
        assert hg_cos_theta(g, u + 1e-3) >= c - 1e-12


@pytest.mark.parametrize("g", [-0.5, 0.0, 0.5, 0.9])
def test_hg_mean_and_variance(g):
    n = 200_000
    out = np.empty(n)
    fill_hg(g, split(11, 0), out)
    mean, var = oracles.hg_moments(g)
    assert abs(out.mean() - mean) < 4 * math.sqrt(var / n)
    assert out.var() == pytest.approx(var, rel=0.02)


def test_sample_hg_phi():
    s = sample_hg(0.5, 0.25, 0.5)
    assert s.phi == pytest.approx(math.pi)


def test_step_distribution_mean():
    out = np.empty(200_000)
    fill_steps(split(4, 0), out)
    assert abs(out.mean() - 1.0) < 4 / math.sqrt(len(out))


@given(unit_vectors(), st.floats(-1, 1), st.floats(0, 2 * math.pi))
def test_rotate_preserves_norm_and_angle(v, cost, phi):
    n = np.array(rotate(*v, cost, phi))
    assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)
    # inside the pole cap v is treated as exactly +-z
    tol = 1e-9 if abs(v[2]) <= physics.POLE_COS else 2e-6
    assert float(n @ v) == pytest.approx(cost, abs=tol)


def test_rotate_near_pole():
    n = np.array(rotate(0.0, 0.0, -1.0, 0.3, 1.0))
    assert n[2] == pytest.approx(-0.3)


# --------------------------------------------------------------------------
# optics


def test_fresnel_normal_incidence():
    assert fresnel(1.0, 1.37, 1.0) == pytest.approx(0.024372874717370804, abs=1e-12)


def test_fresnel_matched_is_zero():
    assert fresnel(1.37, 1.37, 0.3) == 0.0


@given(index, index, angle)
def test_fresnel_against_reference(n1, n2, th):
    r = fresnel_reflectance(n1, n2, math.cos(th))
    ref = oracles.fresnel_unpolarized(n1, n2, th)
    assert 0.0 <= r <= 1.0
    assert r == pytest.approx(ref, abs=1e-9)


def test_total_internal_reflection_threshold():
    crit = oracles.critical_angle_deg(1.37, 1.0)
    assert crit == pytest.approx(46.88, abs=0.01)
    assert fresnel(1.37, 1.0, math.cos(math.radians(crit + 0.01))) == 1.0
    assert fresnel(1.37, 1.0, math.cos(math.radians(crit - 0.01))) < 1.0
    assert fresnel(1.37, 1.0, 0.5) == 1.0


@given(unit_vectors())
def test_reflect_involution(v):
    n = np.array([0.0, 0.0, 1.0])
    r = reflect(v, n)
    assert np.allclose(reflect(r, n), v, atol=1e-12)
    assert r[2] == pytest.approx(-v[2], abs=1e-12)


@given(index, index, st.floats(0.01, 1.0))
def test_refract_snell(n1, n2, cosi):
    th = math.acos(cosi)
    if n1 * math.sin(th) >= n2 * (1 - 1e-9):
        return
    v = np.array([math.sin(th), 0.0, -cosi])
    t = refract(v, np.array([0.0, 0.0, 1.0]), n1, n2)
    assert np.linalg.norm(t) == pytest.approx(1.0, abs=1e-12)
    assert n1 * math.sin(th) == pytest.approx(n2 * math.hypot(t[0], t[1]), abs=1e-9)
    assert t[2] < 0


def test_refract_rejects_bad_normal_and_tir():
    with pytest.raises(ValueError):
        refract([0, 0, 1.0], [0, 0, 1.0], 1.0, 1.37)
    with pytest.raises(ValueError):
        refract([math.sin(1.2), 0, -math.cos(1.2)], [0, 0, 1.0], 1.37, 1.0)


# --------------------------------------------------------------------------
# absorption and time


@given(st.floats(0, 1), st.floats(0, 2), st.floats(0, 100))
def test_attenuate_partition(w, mua, length):
    after, path = attenuate(w, mua, length)
    assert 0.0 <= after <= w
    assert path <= w * length * (1 + 1e-12) + 1e-300
    assert (w - after) == pytest.approx(mua * path, rel=1e-9, abs=1e-15)


def test_attenuate_small_and_zero():
    assert attenuate(1.0, 0.0, 5.0) == (1.0, 5.0)
    after, path = attenuate(1.0, 1e-12, 1.0)
    assert path == pytest.approx(1.0 - 5e-13, rel=1e-15)


def test_time_advance():
    assert advance_time(0.0, C0, 1.37) == pytest.approx(1.37)


def test_medium_validation():
    Medium(0.0, 0.0, 1.0, 1.0).validate()
    for bad in [(-1, 0, 0, 1), (0, -1, 0, 1), (0, 0, 1.5, 1), (0, 0, 0, 0.9)]:
        with pytest.raises(ValueError):
            Medium(*bad).validate()


@settings(max_examples=20)
@given(st.integers(0, 2 ** 63), st.integers(0, 1000))
def test_split_never_zero(seed, k):
    s = split(seed, k)
    assert int(s[0]) or int(s[1])


def test_module_constants():
    assert physics.UNIT_SCALE == 2.0 ** -53
