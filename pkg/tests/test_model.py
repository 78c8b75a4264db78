import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import lssgeo
from lssgeo import LssModel, ThetaParams, custom, exponential, gev, gpd
from lssgeo.errors import DomainError, ValidationError

EULER_GAMMA = 0.5772156649015329


def test_theta_validation():
    with pytest.raises(ValidationError):
        ThetaParams(0.0, -1.0, 0.0)
    with pytest.raises(ValidationError):
        ThetaParams(0.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        ThetaParams(math.nan, 1.0, 0.0)
    th = ThetaParams(1, 2, 0.1)
    assert tuple(th) == (1.0, 2.0, 0.1)
    assert th.replace(xi=0.2).xi == 0.2


def test_model_construction_checks():
    with pytest.raises(ValidationError):
        LssModel(exponential(), shape_interval=(0.1, 0.3))
    with pytest.raises(ValidationError):
        LssModel(exponential(), shape_interval=(-0.2, 0.6))
    model = gev()
    with pytest.raises(DomainError):
        model.theta(0.0, 1.0, 0.5)


def test_density_examples(gev_model, gpd_model):
    assert gpd_model.density(ThetaParams(0, 1, 0), 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert gpd_model.density(ThetaParams(0, 1, 0.5), 0.0) == pytest.approx(1.0, rel=1e-15)
    assert gev_model.density(ThetaParams(0, 1, 0.2), -6.0) == 0.0


def test_cdf_examples(gev_model, gpd_model):
    assert gpd_model.cdf(ThetaParams(0, 1, 0), math.log(2)) == pytest.approx(0.5, rel=1e-15)
    assert gev_model.cdf(ThetaParams(0, 1, 0.2), 1e300) == 1.0
    assert gpd_model.cdf(ThetaParams(0, 1, -1.0), 0.5) == pytest.approx(0.5, rel=1e-14)


def test_quantile_examples(gev_model, gpd_model):
    assert gpd_model.quantile(ThetaParams(0, 1, 0), 1 - math.exp(-1)) == pytest.approx(1.0, rel=1e-14)
    assert gpd_model.quantile(ThetaParams(0, 1, 0.5), 0.75) == pytest.approx(2.0, rel=1e-14)
    th = ThetaParams(1.3, 2.0, 0.3)
    assert gev_model.quantile(th, 1 / math.e) == pytest.approx(1.3, abs=1e-14)
    with pytest.raises(DomainError):
        gev_model.quantile(th, 1.0)


def test_support_examples(gev_model, gpd_model):
    s = gev_model.support(ThetaParams(0, 1, 0.2))
    assert (s.lo, s.hi) == (-5.0, math.inf) and s.lo_closed
    s = gpd_model.support(ThetaParams(1, 2, -0.5))
    assert (s.lo, s.hi) == (1.0, 5.0) and s.lo_closed and s.hi_closed
    s = gev_model.support(ThetaParams(0, 1, 0))
    assert (s.lo, s.hi) == (-math.inf, math.inf)


def test_mean_var_examples(gev_model, gpd_model):
    m, v = gpd_model.mean_var(ThetaParams(0, 1, 0.25))
    assert m == pytest.approx(4 / 3, rel=1e-13)
    assert v == pytest.approx(1 / (0.75**2 * 0.5), rel=1e-13)
    m, v = gev_model.mean_var(ThetaParams(0, 1, 0))
    assert m == pytest.approx(EULER_GAMMA, rel=1e-14)
    assert v == pytest.approx(math.pi**2 / 6, rel=1e-14)


def test_mean_var_symmetric_base():
    base = custom(lambda z: np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi))
    model = LssModel(base)
    m, v = model.mean_var(ThetaParams(-0.7, 1.4, 0.0))
    assert m == pytest.approx(-0.7, abs=1e-13)
    assert v == pytest.approx(1.96, rel=1e-12)


def test_moment_examples(gev_model, gpd_model):
    assert gpd_model.moment_T(ThetaParams(0, 1, 0.25), 2, 0) == pytest.approx(2.0, rel=1e-15)
    assert gev_model.moment_T(ThetaParams(0, 1, 0.3), 0, 0) == 1.0
    assert gpd_model.moment_T(ThetaParams(0, 1, 0.25), 1, 1) == pytest.approx(0.25 / 0.75**2, rel=1e-14)
    with pytest.raises(DomainError):
        gpd_model.moment_T(ThetaParams(0, 1, 0.3), 4, 0)


def test_moment_T_monte_carlo(gpd_model):
    th = ThetaParams(0.0, 1.0, 0.25)
    x = gpd_model.sample(th, 400_000, seed=5)
    t = 1 + 0.25 * x
    draws = t * np.log(t)
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - gpd_model.moment_T(th, 1, 1)) <= 4 * se


def test_scipy_cross_check():
    # scipy's genextreme uses c = -xi
    x = np.linspace(-1.5, 6, 31)
    for xi in (-0.3, 0.0, 0.25):
        th = ThetaParams(0.4, 1.2, xi)
        ref = stats.genextreme(c=-xi, loc=0.4, scale=1.2)
        np.testing.assert_allclose(gev().cdf(th, x), ref.cdf(x), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(gev().density(th, x), ref.pdf(x), rtol=1e-10, atol=1e-15)
        ref = stats.genpareto(c=xi, loc=0.4, scale=1.2)
        np.testing.assert_allclose(gpd().cdf(th, x), ref.cdf(x), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(gpd().density(th, x), ref.pdf(x), rtol=1e-10, atol=1e-15)


def test_shape_continuity_at_zero(model):
    x = np.linspace(-1, 4, 21) if model.name == "gev" else np.linspace(0, 4, 21)
    base = ThetaParams(0.0, 1.0, 0.0)
    for d in (1e-9, -1e-9):
        np.testing.assert_allclose(model.cdf(base.replace(xi=d), x), model.cdf(base, x), atol=1e-8)
        np.testing.assert_allclose(model.quantile(base.replace(xi=d), 0.3), model.quantile(base, 0.3), atol=1e-8)


@pytest.mark.parametrize("xi", [-0.4, -0.2, 0.0, 0.2, 0.4])
def test_normalization(model, xi):
    th = ThetaParams(0.3, 1.7, xi)
    s = model.support(th)
    lo = s.lo if math.isfinite(s.lo) else -math.inf
    hi = s.hi if math.isfinite(s.hi) else math.inf
    total = lssgeo.integrate(lambda x: model.density(th, x), lo, hi).value
    assert total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("xi", [-0.4, -0.1, 0.0, 0.1, 0.4])
def test_quantile_cdf_inverse(model, xi):
    th = ThetaParams(-1.0, 0.8, xi)
    u = np.linspace(1e-4, 1 - 1e-4, 301)
    x = model.quantile(th, u)
    assert np.all(np.diff(x) > 0)
    np.testing.assert_allclose(model.cdf(th, x), u, rtol=1e-9, atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(
    mu=st.floats(-5, 5),
    sigma=st.floats(0.1, 5),
    xi=st.floats(-0.44, 0.44),
    u=st.floats(1e-6, 1 - 1e-6),
)
def test_quantile_round_trip_property(mu, sigma, xi, u):
    for model in (gev(), gpd()):
        th = ThetaParams(mu, sigma, xi)
        x = model.quantile(th, u)
        assert model.cdf(th, x) == pytest.approx(u, rel=1e-9, abs=1e-12)


def test_cdf_nonincreasing_in_shape(model):
    xis = np.linspace(-0.4, 0.4, 20)
    x = np.linspace(-2.4, 2.4, 100) if model.name == "gev" else np.linspace(0.0, 2.4, 100)
    cdfs = np.array([model.cdf(ThetaParams(0, 1, xi), x) for xi in xis])
    assert np.max(np.diff(cdfs, axis=0)) <= 1e-10


@pytest.mark.parametrize("heavy,light", [(0.4, 0.2), (0.3, 0.1), (0.35, 0.05)])
def test_right_tail_ordering(model, heavy, light):
    th1, th2 = ThetaParams(0.5, 1.2, heavy), ThetaParams(0.5, 1.2, light)
    x = model.quantile(th1, 0.999) * np.geomspace(1, 1e5, 100)
    assert np.all(model.sf(th2, x) <= model.sf(th1, x))


def test_right_tail_ordering_unequal_scales(gev_model):
    # beyond a threshold the heavier tail wins regardless of location/scale
    th1, th2 = ThetaParams(-2.0, 0.5, 0.3), ThetaParams(3.0, 3.0, 0.1)
    x = np.geomspace(1e4, 1e12, 50)
    assert np.all(gev_model.sf(th2, x) <= gev_model.sf(th1, x))


@pytest.mark.parametrize("heavy,light", [(-0.1, -0.3), (-0.2, -0.4)])
def test_left_tail_ordering_gev(gev_model, heavy, light):
    # left tail of the smaller shape is the heavier one
    th1, th2 = ThetaParams(0, 1, light), ThetaParams(0, 1, heavy)
    x = gev_model.quantile(th1, 1e-3) * np.geomspace(1, 1e4, 60)
    assert np.all(gev_model.cdf(th2, x) <= gev_model.cdf(th1, x))


@pytest.mark.parametrize(
    "family,theta,mean",
    [("gpd", (0, 1, 0.25), 4 / 3), ("gev", (0, 1, 0), EULER_GAMMA)],
)
def test_sample_mean(family, theta, mean):
    model = gev() if family == "gev" else gpd()
    th = ThetaParams(*theta)
    x = model.sample(th, 1_000_000, seed=11)
    _, var = model.mean_var(th)
    assert abs(x.mean() - mean) <= 3 * math.sqrt(var / x.size)


def test_sample_reproducible(gev_model):
    th = ThetaParams(0, 1, 0.1)
    np.testing.assert_array_equal(gev_model.sample(th, 10, seed=3), gev_model.sample(th, 10, seed=3))
    assert not np.array_equal(gev_model.sample(th, 10, seed=3), gev_model.sample(th, 10, seed=4))


def test_uniform_gpd():
    th = ThetaParams(0, 1, -1.0)
    model = gpd()
    np.testing.assert_allclose(model.density(th, [0.1, 0.5, 0.9]), 1.0, rtol=1e-14)
    assert model.density(th, 1.5) == 0.0
    assert model.quantile(th, 0.37) == pytest.approx(0.37, rel=1e-14)


def test_expect_matches_mean(model):
    th = ThetaParams(0.2, 1.1, -0.25)
    mean, var = model.mean_var(th)
    assert model.expect(th, lambda x: x).value == pytest.approx(mean, rel=1e-12)
    assert model.expect(th, lambda x: (x - mean) ** 2).value == pytest.approx(var, rel=1e-10)
