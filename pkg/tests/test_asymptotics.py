import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlpotlab.asymptotics import (
    alpha0,
    average_wolff_diagnostic,
    estimate_m,
    fundamental_solution,
    lower_envelope_holds,
    m_of_point_charge,
    m_of_r,
    point_charge_of_m,
    rescaled_field,
    sphere_directions,
)
from nlpotlab.measures import Atom, RadialPart, RadonMeasure, rescale_measure
from nlpotlab.plaplace import PSolution, solve_radial, truncate
from nlpotlab.wolff import WolffParams, singular_ratio

O3 = np.zeros(3)


def green_field(n, p, m=1.0):
    k = (n - p) / (p - 1)
    fn = (lambda x: -m * np.log(np.linalg.norm(x, axis=1))) if p == n else (
        lambda x: m * np.linalg.norm(x, axis=1) ** -k)
    return PSolution.from_function(fn, p, n, measure=RadonMeasure.dirac(np.zeros(n), point_charge_of_m(m, n, p)))


def test_fundamental_solution_values():
    assert fundamental_solution(3, 2.0, [0.5, 0, 0]) == pytest.approx(2.0)
    assert fundamental_solution(3, 3.0, [math.exp(-1), 0, 0]) == pytest.approx(1.0)
    assert fundamental_solution(4, 2.0, [0.5, 0, 0, 0]) == pytest.approx(4.0)
    assert fundamental_solution(3, 2.0, O3) == math.inf


def test_alpha0_values():
    assert alpha0(3, 2.0) == pytest.approx(4 * math.pi)
    assert alpha0(3, 3.0) == pytest.approx(4 * math.pi)
    assert alpha0(4, 2.0) == pytest.approx(4 * math.pi**2)
    with pytest.raises(ValueError):
        alpha0(3, 3.5)


def test_point_charge_conversions():
    assert point_charge_of_m(1.0, 3, 2.0) == pytest.approx(4 * math.pi)
    assert point_charge_of_m(0.0, 3, 2.0) == 0.0
    assert m_of_point_charge(8 * math.pi, 3, 2.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        point_charge_of_m(-1.0, 3, 2.0)


@given(st.floats(0.0, 10.0), st.sampled_from([(3, 1.5), (3, 2.0), (3, 2.7), (3, 3.0), (4, 2.0), (4, 3.5)]))
def test_point_charge_roundtrip(m, np_):
    n, p = np_
    assert m_of_point_charge(point_charge_of_m(m, n, p), n, p) == pytest.approx(m, rel=1e-12, abs=1e-12)


def test_sphere_directions_unit_and_count():
    d = sphere_directions(3)
    assert d.shape == (32**2, 3)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.allclose(d.mean(axis=0), 0.0, atol=0.02)


def test_m_of_r_closed_form():
    u = green_field(3, 2.0)
    for r in (0.5, 0.1, 0.01):
        assert m_of_r(u, O3, r, 1 / 3) == pytest.approx((1 / r) / (1 / r - 1 / 3), rel=1e-12)


def test_m_of_r_zero_field():
    u = PSolution.from_function(lambda x: np.zeros(len(x)), 2.0, 3)
    assert m_of_r(u, O3, 0.1, 1 / 3) == 0.0


def test_m_of_r_rejects_nonpositive_denominator():
    with pytest.raises(ValueError):
        m_of_r(green_field(3, 2.0), O3, 3.0, 1 / 3)


def test_m_of_r_monotone_ladder():
    mu = RadonMeasure(3, (Atom(O3, 4 * math.pi),), (RadialPart.uniform(O3, 1.0, 2.0),))
    u = solve_radial(mu, 2.5, 1.0)
    g0 = fundamental_solution(3, 2.5, [1.0, 0, 0])
    ms = [m_of_r(u, O3, 2.0**-i, g0) for i in range(2, 10)]
    assert np.all(np.diff(ms) <= 1e-12)


def test_estimate_m_pure_atom():
    fit = estimate_m(RadonMeasure.dirac(O3, 4 * math.pi), 2.0, depth=8)
    assert fit.m_liminf == pytest.approx(1.0, rel=1e-9)
    assert fit.point_charge == pytest.approx(4 * math.pi, rel=1e-9)
    assert all(not m.any() for m in fit.exclusion_masks.values())
    assert fit.conclusive


def test_estimate_m_density_only():
    fit = estimate_m(RadonMeasure(3, (), (RadialPart.uniform(O3, 1.0, 1.0),)), 2.0, depth=8)
    assert fit.m_liminf == pytest.approx(0.0, abs=2e-3)


def test_estimate_m_atom_plus_density():
    mu = RadonMeasure(3, (Atom(O3, 4 * math.pi),), (RadialPart.uniform(O3, 1.0, 1.0),))
    fit = estimate_m(mu, 2.0, depth=8)
    assert fit.m_liminf == pytest.approx(1.0, rel=0.05)
    assert fit.m_liminf <= fit.m_excluded_limit + 1e-3
    assert fit.monotone_violation == 0.0
    u = solve_radial(mu, 2.0, 1.0)
    pts = np.geomspace(2.0**-9, 0.9, 20)[:, None] * np.eye(3)[0]
    assert lower_envelope_holds(u, fit, pts)


@pytest.mark.parametrize("n,p", [(3, 3.0), (4, 2.0), (4, 4.0)])
def test_estimate_m_consistency_triangle(n, p):
    charge = 2.0 * alpha0(n, p)
    fit = estimate_m(RadonMeasure.dirac(np.zeros(n), charge), p, depth=8)
    assert fit.point_charge == pytest.approx(charge, rel=0.05)


def test_exclusion_sets_from_thin_weights():
    # an atom on the ray at 2^-6 e1 forces exclusions around it
    mu = RadonMeasure(3, (Atom(O3, 4 * math.pi), Atom([0.75 * 2.0**-6, 0, 0], 0.1)))
    fit = estimate_m(PSolution.from_function(lambda x: np.linalg.norm(x, axis=1) ** -1.0, 2.0, 3, measure=mu),
                     2.0, depth=8)
    assert np.all(np.isfinite(fit.alphas)) and np.all(fit.alphas > 0)
    assert fit.exclusion_masks[6].any()
    assert not fit.exclusion_masks[3].any()


# -- rescaling ---------------------------------------------------------------------------


@pytest.mark.parametrize("n,p", [(3, 2.0), (3, 2.5), (4, 3.0)])
def test_rescaled_green_is_identity(n, p):
    u = green_field(n, p, 1.7)
    xi = sphere_directions(n, 64) * np.linspace(0.5, 2.0, 64)[:, None]
    expected = u(xi)
    for r in (0.5, 2.0**-6, 2.0**-12):
        ur = rescaled_field(u, r)
        assert np.max(np.abs(ur(xi) - expected) / expected) < 1e-12


def test_rescaled_measure_matches():
    mu = RadonMeasure(3, (Atom(O3, 1.0),), (RadialPart.uniform(O3, 1.0, 1.0),))
    u = solve_radial(mu, 2.0, 1.0)
    ur = rescaled_field(u, 0.25)
    ref = rescale_measure(mu, 0.25)
    assert ur.measure.total_mass == pytest.approx(ref.total_mass)
    with pytest.raises(ValueError):
        rescaled_field(u, 0.75)


def test_rescaled_truncation_bounded():
    mu = RadonMeasure(3, (Atom(O3, 8 * math.pi),), (RadialPart.uniform(O3, 1.0, 1.0),))
    t = truncate(solve_radial(mu, 2.0, 1.0), 0.5)
    xi = sphere_directions(3, 64) * np.linspace(0.5, 2.0, 64)[:, None]
    rho = np.linalg.norm(xi, axis=1)
    for r in (2.0**-2, 2.0**-5, 2.0**-9):
        assert np.all(rho * rescaled_field(t, r)(xi) <= 1.5 + 1e-12)


def test_rescaled_converges_to_m_green():
    mu = RadonMeasure(3, (Atom(O3, 4 * math.pi),), (RadialPart.uniform(O3, 1.0, 1.0),))
    u = solve_radial(mu, 2.0, 1.0)
    xi = sphere_directions(3, 64) * np.linspace(0.5, 2.0, 64)[:, None]
    g = np.linalg.norm(xi, axis=1) ** -1.0
    errs = [np.max(np.abs(rescaled_field(u, 2.0**-k)(xi) - g) / g) for k in range(4, 9)]
    assert np.all(np.diff(errs) < 0) and errs[-1] < 0.01


# -- averaged Wolff diagnostic -----------------------------------------------------------


def test_average_wolff_atom_vanishes():
    mu_r = rescale_measure(RadonMeasure.dirac(O3, 1.0), 2.0**-6)
    assert average_wolff_diagnostic(mu_r, 2.0, [1.0, 0, 0], 0.1) == 0.0


def test_average_wolff_density_decays():
    mu = RadonMeasure(3, (), (RadialPart.uniform(O3, 1.0, 1.0),))
    vals = [average_wolff_diagnostic(rescale_measure(mu, 2.0**-k), 2.0, [1.0, 0, 0], 0.1, samples=32)
            for k in (2, 4, 6)]
    assert vals[0] > vals[1] > vals[2] > 0
    # mu_r(B) = mu(rB) ~ r^3 and W is linear in mu for p = 2
    assert vals[1] / vals[2] == pytest.approx(64.0, rel=0.05)


def test_average_wolff_fixed_atom_off_center():
    rbar = 2.0**-5
    mu = RadonMeasure.dirac([rbar, 0, 0], 1.0)
    at = average_wolff_diagnostic(rescale_measure(mu, rbar), 2.0, [1.0, 0, 0], 0.1, samples=32)
    deep = average_wolff_diagnostic(rescale_measure(mu, 2.0**-10), 2.0, [1.0, 0, 0], 0.1, samples=32)
    assert at > 0.1 and deep == 0.0


def test_singular_ratio_of_green_is_exact():
    # cross-module check: W of alpha0 delta at small radius vs G_p
    mu = RadonMeasure.dirac(O3, 4 * math.pi)
    assert singular_ratio(mu, WolffParams(2.0, 3), [1e-4, 0, 0]) > 0
