import math

import numpy as np
import pytest
from scipy import stats

import array_builder as ab
import gof_stats
import stable_core as sc


def cauchy_tail(t, sigma=1.0):
    return 1 - 2 / math.pi * math.atan(t / sigma)


def test_make_params_rejects_out_of_range():
    for alpha, sigma in [(0.0, 1.0), (2.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, math.inf)]:
        with pytest.raises(sc.ParamsError):
            sc.make_params(alpha, sigma)
    p = sc.make_params(1, 2)
    assert isinstance(p.alpha, float) and p.dispersion == 2.0, "alpha=1 dispersion is sigma"


def test_cdf_cauchy_closed_form():
    p = sc.make_params(1.0, 1.0)
    assert sc.cdf_sas(p, 0.0) == 0.5, "F(0) is exactly 1/2"
    assert sc.cdf_sas(p, 1.0) == pytest.approx(0.75, abs=1e-8), "Cauchy F(1) = 3/4"
    for x in (0.1, 0.5, 3.0, 40.0, 1000.0):
        expected = 0.5 + math.atan(x) / math.pi
        assert sc.cdf_sas(p, x) == pytest.approx(expected, abs=sc.CDF_TOLERANCE), f"Cauchy CDF at {x}"
        assert sc.cdf_sas(p, x) + sc.cdf_sas(p, -x) == pytest.approx(1.0, abs=1e-15), "symmetry"


def test_tail_probability_relative_accuracy_far_out():
    p = sc.make_params(1.0, 0.5)
    for t in (2.0**8, 2.0**12):
        assert sc.tail_probability(p, t) == pytest.approx(cauchy_tail(t, 0.5), rel=1e-3), f"small tail at {t}"


def test_tail_probability_rejects_infinite_t():
    with pytest.raises(sc.DomainError):
        sc.tail_probability(sc.make_params(1.0), math.inf)


def test_cdf_monotone_for_several_alpha():
    for alpha in (0.5, 1.2, 1.8):
        p = sc.make_params(alpha)
        values = [sc.cdf_sas(p, x) for x in np.linspace(-10, 10, 41)]
        assert all(a <= b + sc.CDF_TOLERANCE for a, b in zip(values, values[1:])), f"F not monotone at {alpha}"
        assert values[0] < 0.5 < values[-1]


def test_cdf_small_alpha_matches_sampler():
    xs = (0.5, 1.0, 2.0, 3.0, 10.0, 1e3, 1e6)
    for alpha in (0.1, 0.2, 0.3):
        p = sc.make_params(alpha)
        values = [sc.cdf_sas(p, x) for x in xs]
        assert all(a <= b for a, b in zip(values, values[1:])), f"F not monotone at alpha={alpha}: {values}"
        draws = np.abs(ab.iid_sample(p, 17, 200_000))
        for x, value in zip(xs, values):
            empirical = 0.5 + 0.5 * np.mean(draws < x)
            assert value == pytest.approx(empirical, abs=0.005), f"alpha={alpha}, x={x}"


def test_cdf_far_out_and_near_one():
    cauchy = sc.make_params(1.0)
    for x in (1e15, 1e300):
        assert sc.tail_probability(cauchy, x) == pytest.approx(2 / (math.pi * x), rel=1e-12)
        assert sc.cdf_sas(cauchy, x) == pytest.approx(1.0)
    for alpha, x in ((0.2, 3.0), (0.3, 1000.0), (0.1, 10.0), (1.5, 1e300)):
        assert 0.5 < sc.cdf_sas(sc.make_params(alpha), x) <= 1.0, f"alpha={alpha}, x={x}"


def test_series_and_integral_agree_at_the_switch():
    for alpha in (0.5, 1.5):
        p = sc.make_params(alpha)
        x0 = sc.SERIES_START ** (-1 / alpha)
        below, above = sc.tail_probability(p, x0 * (1 - 1e-9)), sc.tail_probability(p, x0 * (1 + 1e-9))
        assert below == pytest.approx(above, rel=1e-6), f"jump at alpha={alpha}"
        assert above == pytest.approx(sc.asymptotic_tail_constant(alpha) * x0**-alpha, rel=1e-3)


def test_cdf_against_scipy_levy_stable():
    for alpha in (0.7, 1.5):
        for x in (0.5, 2.0, 5.0):
            expected = stats.levy_stable.cdf(x, alpha, 0.0)
            assert sc.cdf_sas(sc.make_params(alpha), x) == pytest.approx(expected, abs=1e-5), f"alpha={alpha}, x={x}"


def test_quantile_inverts_cdf():
    p = sc.make_params(1.5, 0.7)
    for prob in (0.01, 0.3, 0.5, 0.9):
        x = sc.quantile_sas(p, prob)
        assert sc.cdf_sas(p, x) == pytest.approx(prob, abs=1e-7), f"quantile at {prob}"
    assert sc.quantile_sas(sc.make_params(1.0), 0.75) == pytest.approx(1.0, abs=1e-7)
    with pytest.raises(sc.DomainError):
        sc.quantile_sas(p, 1.0)


def test_cms_transform_alpha_one_is_tangent():
    u = np.array([-1.0, 0.0, 0.3, 1.2])
    e = np.ones_like(u)
    assert np.array_equal(sc.cms_transform(1.0, 1.0, u, e), np.tan(u)), "alpha=1 reduces to tan(U)"


def test_cms_transform_linear_in_sigma():
    u = np.array([-1.2, -0.4, 0.2, 0.9])
    e = np.array([0.3, 1.0, 2.5, 0.05])
    base = sc.cms_transform(1.3, 1.0, u, e)
    assert np.allclose(sc.cms_transform(1.3, 2.5, u, e), 2.5 * base, rtol=1e-15, atol=0)


def test_sample_sas_is_pure_function_of_key():
    params = sc.make_params(0.8)
    key = ab.RandomKey(7, 3, 11, 2, ab.StreamTag.SAMPLER)
    assert sc.sample_sas(params, key) == sc.sample_sas(params, ab.RandomKey(7, 3, 11, 2, ab.StreamTag.SAMPLER))
    assert sc.sample_sas(params, key) != sc.sample_sas(params, ab.RandomKey(7, 3, 12, 2, ab.StreamTag.SAMPLER))


def test_sampler_matches_cdf():
    params = sc.make_params(1.0)
    sample = gof_stats.EmpiricalSample(ab.iid_sample(params, 3, 2000))
    assert gof_stats.ks_distance(sample, params) <= gof_stats.ks_threshold(2000, 1.5), "CMS draws fail KS"


def test_cf_value():
    p = sc.make_params(1.5, 2.0)
    assert sc.cf_value(p, 0.0) == 1.0
    assert sc.cf_value(p, -0.5) == pytest.approx(math.exp(-(2.0**1.5) * 0.5**1.5))


def test_asymptotic_tail_constant_cauchy():
    assert sc.asymptotic_tail_constant(1.0) == pytest.approx(2 / math.pi)


def test_tail_constant_cauchy_is_asymptotic():
    cert = sc.calibrate_tail_constant(1.0)
    # t * P(|X| >= t) increases to 2/pi for the Cauchy law
    assert cert.c_alpha >= 2 / math.pi
    assert cert.c_alpha == pytest.approx(2 / math.pi, rel=1e-5)
    assert cert.valid_from_t == 1.0 and len(cert.t_grid) == 65
    assert sc.tail_bound(sc.make_params(1.0, 0.1), 10.0, cert) == pytest.approx(2 / math.pi * 0.01, rel=1e-9)


def test_calibration_accepts_list_grids():
    cert = sc.calibrate_tail_constant(1.0, [4.0, 1.0, 2.0])
    assert cert.t_grid == (1.0, 2.0, 4.0) and cert.c_alpha == pytest.approx(2 / math.pi)
    assert sc.calibrate_tail_constant(1.0, [1.0, 2.0, 4.0]) is cert, "list grids share the cache"
    variance = sc.calibrate_variance_constant(1.0, [1.0, 8.0])
    assert variance.k_grid == (1.0, 8.0) and variance.c >= variance.asymptotic_c


def test_tail_bound_holds_on_grid():
    for alpha in (0.5, 1.5):
        cert = sc.calibrate_tail_constant(alpha)
        params = sc.make_params(alpha)
        for t in cert.t_grid[::8]:
            assert sc.tail_probability(params, t) <= sc.tail_bound(params, t, cert) * (1 + 1e-8) + 1e-8


def test_tail_bound_domain():
    cert = sc.calibrate_tail_constant(1.0)
    with pytest.raises(sc.DomainError):
        sc.tail_bound(sc.make_params(1.0, 2.0), 10.0, cert)
    with pytest.raises(sc.DomainError):
        sc.tail_bound(sc.make_params(1.0), 0.5, cert)
    with pytest.raises(sc.DomainError):
        sc.tail_bound(sc.make_params(1.5), 10.0, cert)


def test_truncated_variance_cauchy_closed_form():
    p = sc.make_params(1.0)
    for K in (1.0, 3.0, 64.0, 1024.0):
        expected = 2 / math.pi * (K - math.atan(K))
        assert sc.truncated_variance(p, K) == pytest.approx(expected, rel=1e-6), f"Var(X 1[|X|<=K]) at K={K}"


def test_variance_bound_holds():
    cert = sc.calibrate_variance_constant(1.2)
    assert cert.c >= cert.asymptotic_c > 0
    for sigma in (1.0, 0.5):
        p = sc.make_params(1.2, sigma)
        for K in (1.0, 16.0, 1024.0):
            assert sc.truncated_variance(p, K) <= sc.variance_bound(p, K, cert) * (1 + 1e-8)
    with pytest.raises(sc.DomainError):
        sc.truncated_variance(sc.make_params(1.2), 0.5)


def test_dispersion_estimate_recovers_sigma_alpha():
    x = ab.iid_sample(sc.make_params(1.0, 2.0), 11, 100_000)
    estimate = sc.dispersion_estimate(gof_stats.EmpiricalSample(x), 1.0, (0.1, 0.25, 0.5))
    assert estimate == pytest.approx(2.0, rel=0.05), "sigma**alpha of SaS(2) at alpha=1 is 2"


def test_dispersion_estimate_refuses_flat_ecf():
    x = ab.iid_sample(sc.make_params(1.0), 11, 10_000)
    with pytest.raises(sc.GridError):
        sc.dispersion_estimate(gof_stats.EmpiricalSample(x), 1.0, (10.0,))
    with pytest.raises(sc.DomainError):
        sc.dispersion_estimate(gof_stats.EmpiricalSample(x), 1.0, (0.0, 1.0))
