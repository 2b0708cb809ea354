"""Densities, sampling, and the empirical measure."""

import numpy as np
import pytest

import supreg
from supreg import (
    EmpiricalMeasure,
    InputError,
    custom_density,
    density_from_config,
    empirical_mass,
    interval_mass,
    localized_inner,
    localized_norm,
    piecewise_density,
    power_cusp_density,
    sample_model,
    uniform_density,
)
from supreg.errors import EmptyWindow

rng = np.random.default_rng(20240817)


def test_uniform_mass_is_length():
    d = uniform_density()
    assert interval_mass(d, (0.2, 0.7)) == pytest.approx(0.5)
    # clipped to [0, 1]
    assert interval_mass(d, (-1.0, 0.25)) == pytest.approx(0.25)
    assert interval_mass(d, (0.9, 3.0)) == pytest.approx(0.1)
    assert interval_mass(d, (0.5, 0.5)) == 0.0


def test_power_cusp_normalizer_and_mass():
    # tent density 4|x - 1/2|: mass of [1/2 - t, 1/2 + t] is (2t)^2 / ... = 4t^2
    d = power_cusp_density(0.5, 1.0)
    assert d.params["norm"] == pytest.approx(4.0)
    for t in [0.05, 0.1, 0.3]:
        assert interval_mass(d, (0.5 - t, 0.5 + t)) == pytest.approx(4.0 * t * t, rel=1e-12)
    assert interval_mass(d, (0.0, 1.0)) == pytest.approx(1.0, rel=1e-12)


def test_power_cusp_off_center_against_quadrature():
    from scipy.integrate import quad
    d = power_cusp_density(0.3, 2.0)
    norm = d.params["norm"]
    for lo, hi in [(0.1, 0.5), (0.0, 0.3), (0.29, 0.31), (0.7, 1.0)]:
        ref, _ = quad(lambda x: norm * abs(x - 0.3) ** 2, lo, hi, epsabs=1e-13)
        assert interval_mass(d, (lo, hi)) == pytest.approx(ref, abs=1e-11)


def test_piecewise_density_mass_and_validation():
    d = piecewise_density([[0.0, 0.5, 0.4], [0.5, 1.0, 1.6]])
    assert interval_mass(d, (0.0, 0.5)) == pytest.approx(0.2)
    assert interval_mass(d, (0.25, 0.75)) == pytest.approx(0.1 + 0.4)
    with pytest.raises(InputError):
        piecewise_density([[0.0, 0.5, 1.0]])  # does not cover [0, 1]
    with pytest.raises(InputError):
        piecewise_density([[0.0, 0.5, 1.0], [0.5, 1.0, 0.5]])  # mass 0.75


def test_custom_density_matches_closed_form():
    d = custom_density(lambda x: 2.0 * x)
    assert interval_mass(d, (0.0, 0.6)) == pytest.approx(0.36, abs=1e-10)
    u = rng.random(20)
    x = d.ppf(u)
    assert np.allclose(x, np.sqrt(u), atol=1e-10)


def test_ppf_inverts_cdf_uniform_grid():
    for d in [uniform_density(), power_cusp_density(0.5, 1.0),
              power_cusp_density(0.25, 0.5),
              piecewise_density([[0.0, 0.5, 0.4], [0.5, 1.0, 1.6]])]:
        u = np.linspace(0.01, 0.99, 37)
        x = d.ppf(u)
        back = np.array([interval_mass(d, (0.0, xi)) for xi in x])
        assert np.allclose(back, u, atol=1e-10)


def test_density_from_config_roundtrip():
    cfg = {"kind": "power_cusp", "x0": 0.5, "beta": 1.0}
    d = density_from_config(cfg)
    assert d.to_config() == cfg
    assert density_from_config("uniform").kind == "uniform"
    with pytest.raises(InputError):
        density_from_config({"kind": "nope"})


def test_sampling_is_sorted_and_reproducible():
    d = power_cusp_density(0.5, 1.0)
    f = np.sin
    s1 = sample_model(d, f, 0.5, 200, 42)
    s2 = sample_model(d, f, 0.5, 200, 42)
    assert np.array_equal(s1.xs, s2.xs)
    assert np.array_equal(s1.ys, s2.ys)
    assert np.all(np.diff(s1.xs) >= 0)
    s3 = sample_model(d, f, 0.5, 200, 43)
    assert not np.array_equal(s1.xs, s3.xs)


def test_sampling_design_independent_of_noise_stream():
    # same seed, different sigma: identical design, different responses
    d = uniform_density()
    a = sample_model(d, np.sin, 0.1, 100, 7)
    b = sample_model(d, np.sin, 2.0, 100, 7)
    assert np.array_equal(a.xs, b.xs)
    assert not np.array_equal(a.ys, b.ys)


def test_sample_design_distribution_ks():
    # one-sample Kolmogorov-Smirnov against the tent CDF
    from scipy.stats import kstest
    d = power_cusp_density(0.5, 1.0)
    s = sample_model(d, np.sin, 0.0, 4000, 123)

    def cdf(t):
        return np.array([interval_mass(d, (0.0, ti)) for ti in np.atleast_1d(t)])

    stat, pval = kstest(s.xs, cdf)
    assert pval > 1e-3


def test_empirical_measure_window_counts():
    xs = np.array([0.1, 0.2, 0.2, 0.5, 0.9])
    em = EmpiricalMeasure(xs)
    assert em.count((0.15, 0.55)) == 3
    # closed interval: endpoints included
    assert em.count((0.2, 0.5)) == 3
    assert em.count((0.21, 0.49)) == 0
    assert empirical_mass(em, (0.0, 1.0)) == 1.0
    i, j = em.window((0.2, 0.9))
    assert (i, j) == (1, 5)


def test_localized_inner_and_norm():
    xs = np.array([0.0, 0.5, 1.0])
    em = EmpiricalMeasure(xs)
    one = np.ones_like
    val = localized_inner(em, (0.0, 1.0), lambda x: x, one)
    assert val == pytest.approx(0.5)
    assert localized_norm(em, (0.0, 1.0), lambda x: x) == pytest.approx(
        np.sqrt((0.0 + 0.25 + 1.0) / 3.0))
    with pytest.raises(EmptyWindow):
        localized_inner(em, (0.1, 0.2), one, one)


def test_input_validation():
    with pytest.raises(InputError):
        power_cusp_density(1.5, 1.0)
    with pytest.raises(InputError):
        power_cusp_density(0.5, -1.0)
    with pytest.raises(InputError):
        interval_mass(uniform_density(), (0.7, 0.2))
    with pytest.raises(InputError):
        sample_model(uniform_density(), np.sin, -1.0, 10, 0)
    assert issubclass(InputError, supreg.SupregError)
