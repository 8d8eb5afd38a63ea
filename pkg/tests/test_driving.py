import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from loewner_kufarev.driving import (CATALOGUE, FAMILIES, GUARD_RADIUS, Composed, Constant, DomainError,
                                     HalfPlane, Measure, ParameterError, Piecewise, PointKernel, Renormalized,
                                     Schedule, Sector, SpectralMeasure, Strip, brownian_driver, evaluate,
                                     evaluate_derivative, herglotz_from_density, renormalize_time,
                                     term_from_config)

from conftest import catalogue_terms, random_disc
from oracles import central_difference, herglotz_quad


def polar_grid(n=64, r_max=0.999):
    r = np.linspace(0.0, r_max, n)
    th = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    return (r[:, None] * np.exp(1j * th)[None, :]).ravel()


# --- evaluate --------------------------------------------------------------


def test_half_plane_values():
    assert evaluate(HalfPlane(0.0), 0.0) == 1.0
    assert evaluate(HalfPlane(0.0), 0.5, t=3.7) == pytest.approx(3.0, abs=1e-15)
    assert evaluate(HalfPlane(0.3), 0.5) == pytest.approx(0.7 * 3.0 + 0.3, abs=1e-15)


def test_sector_at_origin():
    assert evaluate(Sector(1.0), 0.0) == pytest.approx(1.0, abs=1e-15)
    assert Sector(1.0).alpha == pytest.approx(0.5, abs=1e-15)


def test_strip_range():
    z = polar_grid(64, 0.999)
    p = Strip(0.5, 2.0).value(z)
    assert np.all((p.real > 0.5) & (p.real < 2.0))
    assert evaluate(Strip(0.5, 2.0), 0.0) == pytest.approx(1.25)


def test_sector_range():
    p = Sector(1.0).value(polar_grid(64, 0.999))
    assert np.all(np.abs(p.imag) <= p.real * (1 + 1e-12))


def test_single_atom_measure_matches_point_kernel():
    theta0 = 1.234
    z = polar_grid(64, 0.999)
    m = Measure(SpectralMeasure.point(theta0))
    assert np.max(np.abs(m.value(z) - PointKernel(theta0).value(z))) <= 1e-12 * np.max(np.abs(m.value(z)))
    np.testing.assert_allclose(m.derivative(z), PointKernel(theta0).derivative(z), rtol=1e-12)


@pytest.mark.parametrize("z", [1.0, 1j, 0.99999999999, 2.0])
def test_domain_error_outside_guard(z):
    with pytest.raises(DomainError):
        evaluate(Constant(1.0), z)
    with pytest.raises(DomainError):
        evaluate_derivative(Constant(1.0), z)


def test_guard_radius_is_accepted():
    z = (GUARD_RADIUS - 1e-12) * np.exp(0.3j)
    assert np.isfinite(evaluate(HalfPlane(0.3), z))


def test_nonfinite_input_rejected():
    with pytest.raises(DomainError):
        evaluate(Constant(1.0), complex(float("nan"), 0.0))


@pytest.mark.parametrize("factory", [
    lambda: HalfPlane(1.0), lambda: HalfPlane(-0.1), lambda: Strip(1.2, 2.0), lambda: Strip(0.5, 0.9),
    lambda: Sector(0.0), lambda: Sector(-1.0), lambda: Constant(-1.0), lambda: Sector.from_alpha(1.0),
    lambda: Composed(Constant(1.0), zero=1.0), lambda: Composed(Constant(1.0), scale=1.5),
])
def test_parameter_errors(factory):
    with pytest.raises(ParameterError):
        factory()


# --- derivatives -----------------------------------------------------------


def test_known_derivatives():
    assert evaluate_derivative(Constant(1.0), 0.3 + 0.1j) == 0
    assert evaluate_derivative(HalfPlane(0.0), 0.0) == pytest.approx(2.0)


def test_derivative_matches_finite_difference(term, rng):
    # 1000 random interior points; central difference with step 1e-6
    z = random_disc(rng, 1000, 0.9)
    exact = term.derivative(z, 0.3)
    fd = central_difference(lambda u: term.value(u, 0.3), z, 1e-6)
    scale = np.maximum(np.abs(exact), np.abs(term.value(z, 0.3)))
    assert np.max(np.abs(exact - fd) / scale) < 1e-6


def test_value_and_derivative_consistent(term, rng):
    z = random_disc(rng, 50)
    p, dp = term.value_and_derivative(z, 0.1)
    np.testing.assert_allclose(p, term.value(z, 0.1), rtol=1e-14)
    np.testing.assert_allclose(dp, term.derivative(z, 0.1), rtol=1e-14)


# --- class invariants ------------------------------------------------------


def test_positivity_on_grid(term):
    z = polar_grid(64, 0.999)
    for t in np.linspace(0.0, 2.0, 5):
        assert np.all(term.value(z, t).real > 0)


@pytest.mark.parametrize("t", [HalfPlane(0.3), Sector(2.0), PointKernel(1.0), Strip(0.5, 1.5),
                               Measure(SpectralMeasure.from_weights([0.1, 3.0], [1.0, 1.0]))])
def test_normalization_flag(t):
    assert t.normalized
    times = np.linspace(0.0, 5.0, 100)
    p0 = np.array([complex(t.value(0.0, s)) for s in times])
    assert np.max(np.abs(p0 - 1.0)) <= 1e-12


@given(theta=st.floats(0.0, 2 * math.pi, exclude_max=True),
       r=st.floats(0.0, 0.999), scale=st.floats(0.05, 1.0), rot=st.floats(-10.0, 10.0),
       za=st.floats(0.0, 0.95), zt=st.floats(0.0, 2 * math.pi))
def test_composed_stays_in_class(theta, r, scale, rot, za, zt):
    z = r * np.exp(1j * theta)
    for base in (HalfPlane(0.3), Sector(1.0), Strip(0.5, 2.0), PointKernel(0.4)):
        c = Composed(base, rot, scale, za * np.exp(1j * zt))
        assert c.value(z).real > 0
        assert abs(complex(c.value(0.0)) - complex(base.value(0.0))) < 1e-15


def test_composed_chain_rule(rng):
    c = Composed(Sector(1.0), 0.4, 0.8, 0.2 - 0.5j)
    z = random_disc(rng, 100, 0.9)
    phi, dphi = c.map(z)
    assert np.all(np.abs(phi) < np.abs(z) + 1e-15)  # Schwarz lemma
    np.testing.assert_allclose(dphi, central_difference(lambda u: c.map(u)[0], z, 1e-6), rtol=1e-7)


# --- measures --------------------------------------------------------------


def test_spectral_measure_validation():
    with pytest.raises(ParameterError):
        SpectralMeasure([0.0, 1.0], [0.5, 0.6])
    with pytest.raises(ParameterError):
        SpectralMeasure([1.0, 0.5], [0.5, 0.5])
    with pytest.raises(ParameterError):
        SpectralMeasure([0.0, 7.0], [0.5, 0.5])
    with pytest.raises(ParameterError):
        SpectralMeasure([0.0, 1.0], [1.5, -0.5])
    with pytest.raises(ParameterError):
        SpectralMeasure([], [])


@given(st.lists(st.tuples(st.floats(0.0, 6.28), st.floats(0.001, 10.0)), min_size=1, max_size=20,
                unique_by=lambda p: round(p[0], 6)))
def test_from_weights_is_probability(atoms):
    angles, weights = zip(*atoms)
    m = SpectralMeasure.from_weights(angles, weights)
    assert abs(m.weights.sum() - 1.0) <= 1e-12
    assert np.all(np.diff(m.angles) > 0)
    assert m.raw_mass == pytest.approx(sum(weights))
    assert complex(Measure(m).value(0.0)) == pytest.approx(1.0, abs=1e-12)


def test_uniform_density_gives_unit_term():
    m = herglotz_from_density(np.full(8, 1.0 / (2 * math.pi)), 8)
    np.testing.assert_allclose(m.weights, 1 / 8, rtol=0, atol=1e-15)
    assert m.raw_mass == pytest.approx(1.0, abs=1e-14)
    z = polar_grid(16, 0.5)  # (1 + z^8)/(1 - z^8) differs from 1 by ~z^8
    assert np.max(np.abs(Measure(m).value(z) - 1.0)) < 1e-10 + 2.1 * 0.5 ** 8


def test_uniform_density_exact_at_small_radius():
    m = herglotz_from_density(lambda t: np.full_like(t, 1 / (2 * math.pi)), 8)
    z = polar_grid(16, 0.05)
    assert np.max(np.abs(Measure(m).value(z) - 1.0)) < 1e-10


def test_zero_density_rejected():
    with pytest.raises(ParameterError):
        herglotz_from_density(np.zeros(8), 8)
    with pytest.raises(ParameterError):
        herglotz_from_density(np.array([1.0, -1.0, 1.0, 1.0]), 4)


def test_density_mass_is_midpoint_rule():
    xi = np.random.default_rng(1).uniform(0.5, 2.0, 64)
    m = herglotz_from_density(xi, 64)
    assert m.raw_mass == pytest.approx(2 * math.pi * xi.mean(), rel=1e-14)


def test_narrow_bump_approaches_point_kernel():
    theta0, width = 2.0, 0.02

    def xi(t):
        d = np.angle(np.exp(1j * (t - theta0)))
        return np.exp(-0.5 * (d / width) ** 2)

    m = Measure(herglotz_from_density(xi, 4096))
    mass = herglotz_quad(xi, 0.0).real
    far = np.array([0.5 * np.exp(1j * (theta0 + math.pi)), 0.3j, -0.2 + 0.1j, 0.6 * np.exp(1j * (theta0 + 1.0))])
    quad = np.array([herglotz_quad(xi, z) for z in far]) / mass
    # the discretised measure reproduces the dense quadrature
    np.testing.assert_allclose(m.value(far), quad, rtol=1e-9)
    # and both are close to the point kernel away from the atom
    assert np.max(np.abs(quad - PointKernel(theta0).value(far))) < 2e-3


# --- renormalisation -------------------------------------------------------


def test_renormalize_normalized_is_identity():
    t = HalfPlane(0.3)
    out, scale = renormalize_time(t)
    assert out is t
    assert scale(0.7) == 1.0


def test_renormalize_measure_mass():
    m = Measure(SpectralMeasure.from_weights([0.0, 1.0], [1.0, 3.0]), mass=2.5)
    out, scale = renormalize_time(m)
    assert out.mass == 1.0
    assert scale(0.0) == pytest.approx(1 / 2.5)


def test_renormalize_scaled_strip():
    base = Strip(0.5, 3.5)  # p(0) = 2
    out, scale = renormalize_time(base)
    assert isinstance(out, Renormalized)
    assert complex(out.value(0.0)) == pytest.approx(1.0, abs=1e-15)
    assert scale(0.0) == pytest.approx(0.5)
    assert out.clock(1.0) == pytest.approx(2.0)
    assert out.original_time(2.0) == pytest.approx(1.0)


def test_renormalize_time_dependent_clock():
    base = Piecewise((0.0, 1.0), (Constant(2.0), Constant(0.5)))
    out, scale = renormalize_time(base)
    assert float(out.clock(1.5)) == pytest.approx(2.0 + 0.25, abs=1e-10)
    assert float(out.original_time(2.25)) == pytest.approx(1.5, abs=1e-9)
    assert scale(1.2) == pytest.approx(2.0)


def test_renormalized_bounds_from_density_bounds():
    a, b = 1.0, 4.0
    xi = lambda t: a + (b - a) * 0.5 * (1 + np.sin(3 * t)) * 0.999 + 1e-3
    m = Measure(herglotz_from_density(xi, 2048), mass=7.0)
    out, _ = renormalize_time(m)
    z = polar_grid(64, 0.95)
    re = out.value(z).real
    assert np.all((re > a / b) & (re < b / a))


# --- schedules and configs -------------------------------------------------


def test_schedule_piecewise_constant():
    s = Schedule((0.0, 1.0, 2.5), (0.1, 0.2, 0.3))
    np.testing.assert_allclose(s(np.array([0.0, 0.99, 1.0, 2.49, 2.5, 10.0])), [0.1, 0.1, 0.2, 0.2, 0.3, 0.3])
    np.testing.assert_allclose(s.discontinuities(), [1.0, 2.5])
    np.testing.assert_allclose(s.shifted(1.0)(np.array([0.0, 1.5])), [0.2, 0.3])


def test_brownian_driver_reproducible():
    a = brownian_driver(100, 1.0, 2.0, seed=3)
    b = brownian_driver(100, 1.0, 2.0, seed=3)
    assert a.values == b.values
    assert a.values[0] == 0.0


def test_piecewise_switches_terms():
    p = Piecewise((0.0, 1.0), (Constant(1.0), Constant(3.0)))
    assert complex(p.value(0.2, 0.5)) == 1.0
    assert complex(p.value(0.2, 1.5)) == 3.0
    assert not p.time_independent


def test_config_round_trip(term):
    rebuilt = term_from_config(term.to_config())
    z = np.array([0.1, 0.5j, -0.7 + 0.2j])
    np.testing.assert_allclose(rebuilt.value(z, 0.2), term.value(z, 0.2), rtol=1e-14)


def test_config_schedule_and_errors():
    t = term_from_config({"family": "half_plane", "schedule": [{"start": 0.0, "k": 0.1}, {"start": 1.0, "k": 0.5}]})
    assert isinstance(t, Piecewise)
    assert complex(t.value(0.5, 2.0)) == pytest.approx(0.5 * 3 + 0.5)
    with pytest.raises(ParameterError, match="speling"):
        term_from_config({"family": "strip", "a": 0.5, "speling": 1})
    with pytest.raises(ParameterError):
        term_from_config({"family": "nope"})
    with pytest.raises(ParameterError):
        term_from_config({"family": "sector", "C": 1.0, "alpha": 0.5})
    assert term_from_config({"family": "sector", "alpha": 0.5}).C == pytest.approx(1.0)
    pk = term_from_config({"family": "point_kernel", "u": {"brownian": True, "n": 10, "seed": 1}})
    assert isinstance(pk.u, Schedule)


def test_catalogue_lists_every_family():
    names = [row[0] for row in CATALOGUE]
    assert names == ["HalfPlane", "Strip", "Sector", "PointKernel", "Measure", "Composed", "Constant"]
    assert {row[1] for row in CATALOGUE} == set(FAMILIES)
    assert all(row[3] for row in CATALOGUE)


def test_terms_are_immutable():
    t = HalfPlane(0.3)
    with pytest.raises(Exception):
        t.k = 0.5
    m = SpectralMeasure.point(1.0)
    with pytest.raises(ValueError):
        m.weights[0] = 2.0


def test_catalogue_fixture_covers_families():
    assert {t.family for t in catalogue_terms()} == set(FAMILIES)
