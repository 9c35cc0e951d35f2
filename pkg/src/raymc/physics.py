"""Photon physics kernels.

Everything here is a pure function of its arguments, except the RNG step
functions which advance a ``uint64[3]`` state array in place
(``[s0, s1, draw_count]``).  Vectors are passed as scalar triples inside the
kernels so that numba keeps them in registers; the array-taking helpers at the
bottom are the convenient Python-facing forms.
"""

import math
from typing import NamedTuple

import numpy as np

from ._jit import kernel

C0 = 299.7924580  # speed of light in vacuum, mm/ns
TWO_PI = 2.0 * math.pi
UNIT_SCALE = 1.0 / 9007199254740992.0  # 2**-53
SMALLEST_UNIT = UNIT_SCALE
POLE_COS = 1.0 - 1e-12
SERIES_CUTOFF = 1e-8

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_MIX = 0xD1B54A32D192ED03

_U23 = np.uint64(23)
_U18 = np.uint64(18)
_U5 = np.uint64(5)
_U11 = np.uint64(11)
_U1 = np.uint64(1)


class Medium(NamedTuple):
    """Optical properties: mua, mus in 1/mm, anisotropy g, refractive index n."""

    mua: float
    mus: float
    g: float
    n: float

    def validate(self):
        if not (self.mua >= 0 and self.mus >= 0):
            raise ValueError(f"negative optical coefficient in {self}")
        if not -1.0 <= self.g <= 1.0:
            raise ValueError(f"anisotropy out of [-1, 1] in {self}")
        if not self.n >= 1.0:
            raise ValueError(f"refractive index below 1 in {self}")
        return self


EXTERIOR = Medium(0.0, 0.0, 1.0, 1.0)


class ScatterSample(NamedTuple):
    cos_theta: float
    phi: float


# --------------------------------------------------------------------------
# xorshift128+ and stream seeding


def _splitmix64(x):
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def make_rng(s0, s1):
    """State array for explicit words; the all-zero state is rejected."""
    s0 &= _MASK64
    s1 &= _MASK64
    if s0 == 0 and s1 == 0:
        raise ValueError("xorshift128+ state must not be all zero")
    return np.array([s0, s1, 0], dtype=np.uint64)


def split(seed, stream):
    """Independent generator state for worker ``stream`` of run ``seed``."""
    x = (int(seed) + (int(stream) + 1) * _STREAM_MIX) & _MASK64
    x, a = _splitmix64(x)
    x, b = _splitmix64(x)
    if a == 0 and b == 0:
        b = 1
    return make_rng(a, b)


@kernel
def next_u64(rng):
    s1 = rng[0]
    s0 = rng[1]
    result = s0 + s1
    rng[0] = s0
    s1 ^= s1 << _U23
    rng[1] = s1 ^ s0 ^ (s1 >> _U18) ^ (s0 >> _U5)
    rng[2] += _U1
    return result


@kernel
def next_unit(rng):
    """Uniform double in [0, 1) from the high 53 bits."""
    return float(next_u64(rng) >> _U11) * UNIT_SCALE


def rng_next_u64(state):
    """Functional form: ``(s0, s1) -> (value, (s0', s1'))``."""
    arr = make_rng(*state)
    value = int(next_u64(arr))
    return value, (int(arr[0]), int(arr[1]))


def rng_next_unit(state):
    arr = make_rng(*state)
    value = next_unit(arr)
    return value, (int(arr[0]), int(arr[1]))


# --------------------------------------------------------------------------
# sampling


@kernel
def sample_step(u):
    """Unit-less scattering length -ln(U); U == 0 is nudged off the pole."""
    if u <= 0.0:
        u = SMALLEST_UNIT
    return -math.log(u)


@kernel
def hg_cos_theta(g, u):
    if g == 0.0:
        return 2.0 * u - 1.0
    g2 = g * g
    tmp = (1.0 - g2) / (1.0 - g + 2.0 * g * u)
    c = (1.0 + g2 - tmp * tmp) / (2.0 * g)
    if c > 1.0:
        return 1.0
    if c < -1.0:
        return -1.0
    return c


def sample_hg(g, u1, u2):
    return ScatterSample(hg_cos_theta(g, u1), TWO_PI * u2)


@kernel
def rotate(vx, vy, vz, cost, phi):
    """Deflect (vx, vy, vz) by polar cosine ``cost`` and azimuth ``phi``."""
    sint = math.sqrt(max(0.0, 1.0 - cost * cost))
    cosp = math.cos(phi)
    sinp = math.sin(phi)
    if abs(vz) > POLE_COS:
        nx = sint * cosp
        ny = sint * sinp
        nz = cost if vz > 0.0 else -cost
    else:
        tmp = math.sqrt(1.0 - vz * vz)
        nx = sint * (vx * vz * cosp - vy * sinp) / tmp + vx * cost
        ny = sint * (vy * vz * cosp + vx * sinp) / tmp + vy * cost
        nz = -sint * cosp * tmp + vz * cost
    inv = 1.0 / math.sqrt(nx * nx + ny * ny + nz * nz)
    return nx * inv, ny * inv, nz * inv


@kernel
def fill_units(rng, out):
    for i in range(out.shape[0]):
        out[i] = next_unit(rng)


@kernel
def fill_steps(rng, out):
    for i in range(out.shape[0]):
        out[i] = sample_step(next_unit(rng))


@kernel
def fill_hg(g, rng, out):
    for i in range(out.shape[0]):
        out[i] = hg_cos_theta(g, next_unit(rng))


# --------------------------------------------------------------------------
# boundary optics


@kernel
def fresnel(n1, n2, cosi):
    """Unpolarized reflectance; 1 under total internal reflection."""
    if n1 == n2:
        return 0.0
    if cosi > 1.0:
        cosi = 1.0
    eta = n1 / n2
    sint2 = eta * eta * (1.0 - cosi * cosi)
    if sint2 >= 1.0:
        return 1.0
    cost = math.sqrt(1.0 - sint2)
    rs = (n1 * cosi - n2 * cost) / (n1 * cosi + n2 * cost)
    rp = (n1 * cost - n2 * cosi) / (n1 * cost + n2 * cosi)
    return 0.5 * (rs * rs + rp * rp)


@kernel
def reflect3(vx, vy, vz, nx, ny, nz):
    d = 2.0 * (vx * nx + vy * ny + vz * nz)
    rx = vx - d * nx
    ry = vy - d * ny
    rz = vz - d * nz
    inv = 1.0 / math.sqrt(rx * rx + ry * ry + rz * rz)
    return rx * inv, ry * inv, rz * inv


@kernel
def refract3(vx, vy, vz, nx, ny, nz, n1, n2):
    """Snell refraction; the normal must face the incoming ray (v.n < 0)."""
    cosi = -(vx * nx + vy * ny + vz * nz)
    eta = n1 / n2
    k = 1.0 - eta * eta * (1.0 - cosi * cosi)
    if k < 0.0:
        k = 0.0
    c = eta * cosi - math.sqrt(k)
    rx = eta * vx + c * nx
    ry = eta * vy + c * ny
    rz = eta * vz + c * nz
    inv = 1.0 / math.sqrt(rx * rx + ry * ry + rz * rz)
    return rx * inv, ry * inv, rz * inv


# --------------------------------------------------------------------------
# absorption and time


@kernel
def attenuate(w, mua, length):
    """Return (w_after, path_integrated_weight) for a straight sub-path."""
    if mua == 0.0 or length == 0.0:
        return w, w * length
    x = mua * length
    lost = -w * math.expm1(-x)
    if x < SERIES_CUTOFF:
        return w - lost, w * length * (1.0 - 0.5 * x)
    return w - lost, lost / mua


@kernel
def advance_time(t, length, n):
    return t + length * n / C0


# --------------------------------------------------------------------------
# array-facing helpers


def rotate_direction(v, sample):
    return np.array(rotate(float(v[0]), float(v[1]), float(v[2]),
                           float(sample.cos_theta), float(sample.phi)))


def fresnel_reflectance(n1, n2, cos_i):
    return fresnel(float(n1), float(n2), float(cos_i))


def reflect(v, normal):
    return np.array(reflect3(*map(float, v), *map(float, normal)))


def refract(v, normal, n1, n2):
    v = [float(c) for c in v]
    normal = [float(c) for c in normal]
    cosi = -(v[0] * normal[0] + v[1] * normal[1] + v[2] * normal[2])
    if cosi <= 0:
        raise ValueError("normal must be oriented against the incident ray")
    if fresnel(float(n1), float(n2), cosi) >= 1.0:
        raise ValueError("refraction requested under total internal reflection")
    return np.array(refract3(*v, *normal, float(n1), float(n2)))
