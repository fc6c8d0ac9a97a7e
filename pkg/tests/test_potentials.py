import math

import numpy as np
import pytest
from scipy.integrate import quad

from emsplit import (
    GRAVITATIONAL_CONSTANT,
    GravityParams,
    LennardJonesParams,
    NeoHookeanParams,
    gravitational,
    lennard_jones,
    neo_hookean,
    quadratic,
)
from emsplit._kernels import build_kernels

NH = neo_hookean(NeoHookeanParams(1e3, 4.0))
LJ = lennard_jones(LennardJonesParams(100.0, 1.0))
GRAV = gravitational(GravityParams(1.0, 3e-6))
QUAD = quadratic(2.5)
BUILTIN = {"neo-hookean": NH, "lennard-jones": LJ, "gravity": GRAV, "quadratic": QUAD}

PARTS = ("total", "convex_part", "concave_part", "superconvex_part", "superconcave_part")


def test_parameter_validation():
    with pytest.raises(ValueError):
        NeoHookeanParams(-1.0, 4.0)
    with pytest.raises(ValueError):
        LennardJonesParams(100.0, 0.0)
    with pytest.raises(ValueError):
        GravityParams(1.0, math.inf)


def test_neo_hookean_values():
    assert NH.v(4.0) == 0.0
    assert NH.v(math.sqrt(6.0)) == pytest.approx(1709.2968632290788, rel=1e-15)
    r = np.linspace(1.0, 10.0, 200)
    assert np.all(NH.d2v(r) > 0)
    assert NH.dv(math.sqrt(6.0)) == pytest.approx(1e3 / 3 * (math.sqrt(6) - 64 / 6), rel=1e-14)


def test_neo_hookean_split_is_whole_potential():
    r = np.geomspace(0.1, 100, 50)
    assert np.array_equal(NH.convex_part.v(r), NH.v(r))
    assert np.array_equal(NH.superconvex_part.v(r), NH.v(r))
    assert np.all(NH.concave_part.v(r) == 0) and np.all(NH.superconcave_part.v(r) == 0)


def test_lennard_jones_values():
    assert LJ.v(1.0) == 0.0
    assert LJ.v(2 ** (1 / 6)) == pytest.approx(-100.0, rel=1e-14)
    r = np.linspace(0.9, 5.0, 400)
    assert np.all(LJ.superconvex_part.d4v(r) >= 0)
    assert np.all(LJ.superconcave_part.d4v(r) <= 0)


def test_lennard_jones_parts_signs_on_wide_range():
    r = np.linspace(0.5, 10.0, 2000)
    rep, att = LJ.convex_part, LJ.concave_part
    assert np.all(rep.d2v(r) > 0) and np.all(rep.d4v(r) > 0)
    assert np.all(att.d2v(r) < 0) and np.all(att.d4v(r) < 0)


def test_gravity_values():
    k = GRAVITATIONAL_CONSTANT * 3e-6
    assert GRAVITATIONAL_CONSTANT == 2.95912208286e-4
    assert GRAV.v(1.0) == -k
    r = np.geomspace(1e-3, 1e3, 100)
    assert np.allclose(GRAV.d2v(r), -2 * k / r ** 3, rtol=1e-15)
    assert np.all(GRAV.convex_part.v(r) == 0) and np.all(GRAV.superconvex_part.v(r) == 0)


@pytest.mark.parametrize("name", list(BUILTIN))
@pytest.mark.parametrize("part", PARTS)
def test_derivatives_match_central_differences(name, part):
    pot = getattr(BUILTIN[name], part) if part != "total" else BUILTIN[name].total
    lo, hi = BUILTIN[name].sample_range
    rng = np.random.default_rng(7)
    h_rule = np.finfo(float).eps ** (1 / 3)
    for r in np.exp(rng.uniform(math.log(lo), math.log(hi), 50)):
        d = pot.derivatives(r)
        h = h_rule * r
        lower = pot.derivatives(r + h), pot.derivatives(r - h)
        for order in range(1, 5):
            fd = (lower[0][order - 1] - lower[1][order - 1]) / (2 * h)
            scale = max(abs(d[order]), abs(lower[0][order - 1]) * h_rule / h, 1e-300)
            assert abs(fd - d[order]) <= 1e-6 * scale, (name, part, r, order)


def _kernels_lambda(pot, d0, d1, closed=True, tol_q=0.0):
    k = build_kernels(pot.family)
    return k.radial_lambda(1, 0, tol_q, closed, pot.param_array, d0, d1)


@pytest.mark.parametrize("name", ["neo-hookean", "lennard-jones", "gravity"])
def test_closed_quotient_matches_difference_quotient(name):
    pot = BUILTIN[name]
    lo, hi = pot.sample_range
    rng = np.random.default_rng(3)
    for _ in range(200):
        d0, d1 = np.exp(rng.uniform(math.log(lo), math.log(hi), 2))
        if abs(d1 - d0) < 1e-2 * d0:
            continue
        exact = (pot.v(d1) - pot.v(d0)) / (d1 - d0)
        lam, dlam, _ = _kernels_lambda(pot, d0, d1)
        noise = 4 * np.finfo(float).eps * (abs(pot.v(d0)) + abs(pot.v(d1))) / abs(d1 - d0)
        assert abs(lam - exact) <= 1e-12 * abs(exact) + noise
        # derivative in d1 against the quotient rule
        assert dlam == pytest.approx((pot.dv(d1) - exact) / (d1 - d0), rel=1e-7, abs=noise / abs(d1 - d0))


def test_gravity_quotient_is_non_singular_form():
    k = GRAVITATIONAL_CONSTANT * 3e-6
    for d0, d1 in [(1.0, 1.5), (0.7, 0.7), (5.2, 5.2 + 1e-14)]:
        lam, _, switched = _kernels_lambda(GRAV, d0, d1)
        assert lam == pytest.approx(k / (d0 * d1), rel=1e-15)
        assert not switched


def test_lj_quotient_against_numeric_integral():
    integral, _ = quad(LJ.dv, 1.0, 1.2, epsabs=0, epsrel=1e-13)
    lam, _, _ = _kernels_lambda(LJ, 1.0, 1.2)
    assert lam == pytest.approx(integral / 0.2, rel=1e-12)
    lam_q, _, _ = _kernels_lambda(LJ, 1.0, 1.2, closed=False, tol_q=1e-8)
    assert lam_q == pytest.approx(integral / 0.2, rel=1e-12)
