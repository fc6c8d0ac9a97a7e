"""Built-in split potentials: neo-Hookean spring, Lennard-Jones 12-6, gravity.

Each family is a set of ``numba``-compiled radial functions returning the
value and the first four derivatives. The ``quadratic`` and ``zero`` families
are linear-force test problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

from .model import PotentialFamily, SplitPotential

__all__ = [
    "NeoHookeanParams",
    "LennardJonesParams",
    "GravityParams",
    "GRAVITATIONAL_CONSTANT",
    "neo_hookean",
    "lennard_jones",
    "gravitational",
    "quadratic",
    "zero",
    "NEO_HOOKEAN",
    "LENNARD_JONES",
    "GRAVITY",
    "QUADRATIC",
    "ZERO",
]

#: Gaussian gravitational constant squared, in AU^3 / (Msun day^2).
GRAVITATIONAL_CONSTANT = 2.95912208286e-4


def _positive(name, value):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class NeoHookeanParams:
    """Stiffness ``c`` and rest radius ``r_bar`` of the neo-Hookean spring."""

    c: float
    r_bar: float

    def __post_init__(self):
        object.__setattr__(self, "c", _positive("c", self.c))
        object.__setattr__(self, "r_bar", _positive("r_bar", self.r_bar))


@dataclass(frozen=True)
class LennardJonesParams:
    """Well depth ``epsilon`` and length scale ``sigma``."""

    epsilon: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _positive("epsilon", self.epsilon))
        object.__setattr__(self, "sigma", _positive("sigma", self.sigma))


@dataclass(frozen=True)
class GravityParams:
    """Gravitational constant and the two point masses."""

    m_a: float
    m_b: float
    G: float = GRAVITATIONAL_CONSTANT

    def __post_init__(self):
        for name in ("m_a", "m_b", "G"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    @property
    def k(self) -> float:
        return self.G * self.m_a * self.m_b


@njit(cache=True)
def _none(r, prm):
    z = 0.0 * r
    return z, z, z, z, z


# Neo-Hookean: V = c/6 (r^2 + 2 rb^3/r - 3 rb^2); prm = (c, r_bar)
@njit(cache=True)
def _nh(r, prm):
    c = prm[0]
    rb = prm[1]
    rb3 = rb * rb * rb
    v = c / 6.0 * (r * r + 2.0 * rb3 / r - 3.0 * rb * rb)
    d1 = c / 3.0 * (r - rb3 / (r * r))
    d2 = c / 3.0 * (1.0 + 2.0 * rb3 / (r * r * r))
    d3 = -2.0 * c * rb3 / (r * r * r * r)
    d4 = 8.0 * c * rb3 / (r * r * r * r * r)
    return v, d1, d2, d3, d4


@njit(cache=True)
def _nh_quotient(r0, r1, prm):
    c = prm[0]
    rb = prm[1]
    w = 2.0 * rb * rb * rb / (r0 * r1)
    return c / 6.0 * (r0 + r1 - w), c / 6.0 * (1.0 + w / r1)


# Lennard-Jones parts; prm = (epsilon, sigma)
@njit(cache=True)
def _lj_rep(r, prm):
    s6 = (prm[1] / r) ** 6
    v = 4.0 * prm[0] * s6 * s6
    return v, -12.0 * v / r, 156.0 * v / (r * r), -2184.0 * v / (r * r * r), 32760.0 * v / (r * r * r * r)


@njit(cache=True)
def _lj_att(r, prm):
    v = -4.0 * prm[0] * (prm[1] / r) ** 6
    return v, -6.0 * v / r, 42.0 * v / (r * r), -336.0 * v / (r * r * r), 3024.0 * v / (r * r * r * r)


@njit(cache=True)
def _lj(r, prm):
    a0, a1, a2, a3, a4 = _lj_rep(r, prm)
    b0, b1, b2, b3, b4 = _lj_att(r, prm)
    return a0 + b0, a1 + b1, a2 + b2, a3 + b3, a4 + b4


@njit(cache=True)
def _scaled_power_quotient(r0, r1, sigma, n):
    # ((sigma/r1)^n - (sigma/r0)^n) / (r1 - r0) and its r1-derivative, without cancellation
    a = sigma / r0
    b = sigma / r1
    s = 0.0
    ds = 0.0
    ak = a
    for k in range(n):
        term = ak * b ** (n - k)
        s += term
        ds += (n - k) * term
        ak *= a
    return -s / sigma, ds / (sigma * r1)


@njit(cache=True)
def _lj_quotient(r0, r1, prm):
    q12, d12 = _scaled_power_quotient(r0, r1, prm[1], 12)
    q6, d6 = _scaled_power_quotient(r0, r1, prm[1], 6)
    e4 = 4.0 * prm[0]
    return e4 * (q12 - q6), e4 * (d12 - d6)


# Gravity: V = -k/r; prm = (k,)
@njit(cache=True)
def _grav(r, prm):
    k = prm[0]
    v = -k / r
    r2 = r * r
    return v, k / r2, -2.0 * k / (r2 * r), 6.0 * k / (r2 * r2), -24.0 * k / (r2 * r2 * r)


@njit(cache=True)
def _grav_quotient(r0, r1, prm):
    k = prm[0]
    lam = k / (r0 * r1)
    return lam, -lam / r1


# Quadratic spring V = k r^2 / 2; prm = (k,)
@njit(cache=True)
def _quad(r, prm):
    k = prm[0]
    return 0.5 * k * r * r, k * r, 0.0 * r + k, 0.0 * r, 0.0 * r


NEO_HOOKEAN = PotentialFamily("neo-hookean", _nh, _nh, _none, _nh, _none, quotient=_nh_quotient)
LENNARD_JONES = PotentialFamily("lennard-jones", _lj, _lj_rep, _lj_att, _lj_rep, _lj_att, quotient=_lj_quotient)
GRAVITY = PotentialFamily("gravity", _grav, _none, _grav, _none, _grav, quotient=_grav_quotient)
QUADRATIC = PotentialFamily("quadratic", _quad, _quad, _none, _quad, _none)
ZERO = PotentialFamily("zero", _none, _none, _none, _none, _none)


def neo_hookean(params: NeoHookeanParams, domain_min: float = 1e-12, validate: bool = True) -> SplitPotential:
    """Stiff spring ``V = c r_bar^2/6 [(r/r_bar)^2 + 2 r_bar/r - 3]``.

    The whole potential is convex and super-convex for ``r > 0``, so both
    splits put all of ``V`` in the positive part. The family carries the
    cancellation-free difference quotient
    ``c/6 (r0 + r1 - 2 r_bar^3 / (r0 r1))``.
    """
    return SplitPotential(
        NEO_HOOKEAN, (params.c, params.r_bar), domain_min,
        sample_range=(1e-3 * params.r_bar, 1e3 * params.r_bar), validate=validate,
    )


def lennard_jones(params: LennardJonesParams, domain_min: float = 1e-12, validate: bool = True) -> SplitPotential:
    """12-6 potential ``4 eps [(sigma/r)^12 - (sigma/r)^6]``.

    Both splits use the repulsive term as the positive part and the
    attractive term as the negative part. The family's closed-form quotient
    expands ``(b^n - a^n)/(r1 - r0)`` as a finite geometric sum.
    """
    return SplitPotential(
        LENNARD_JONES, (params.epsilon, params.sigma), domain_min,
        sample_range=(0.5 * params.sigma, 10.0 * params.sigma), validate=validate,
    )


def gravitational(params: GravityParams, domain_min: float = 1e-12, validate: bool = True) -> SplitPotential:
    """Newtonian attraction ``-G m_a m_b / r``, entirely concave and super-concave.

    The family carries the closed form ``G m_a m_b / (r0 r1)`` of the
    difference quotient, which has no cancellation as ``r1 -> r0``.
    """
    return SplitPotential(
        GRAVITY, (params.k,), domain_min,
        sample_range=(1e-3, 1e3), validate=validate,
    )


def quadratic(k: float = 1.0, domain_min: float = 1e-12, validate: bool = True) -> SplitPotential:
    """Linear spring ``k r^2 / 2`` anchored at zero separation."""
    return SplitPotential(QUADRATIC, (float(k),), domain_min, sample_range=(1e-3, 1e3), validate=validate)


def zero(domain_min: float = 1e-12) -> SplitPotential:
    """No interaction; useful for free-flight checks."""
    return SplitPotential(ZERO, (0.0,), domain_min, sample_range=(1e-3, 1e3))
