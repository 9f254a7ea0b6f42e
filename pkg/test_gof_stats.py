import json
import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats

import array_builder as ab
import gof_stats
import stable_core as sc


def cauchy_sample(count=2000, sigma=1.0, seed=21):
    return gof_stats.EmpiricalSample(ab.iid_sample(sc.make_params(1.0, sigma), seed, count))


def test_empirical_sample_is_sorted_and_read_only():
    sample = gof_stats.EmpiricalSample.from_values([3.0, -1.0, 2.0])
    assert sample.values.tolist() == [-1.0, 2.0, 3.0]
    assert sample.n == 3
    assert sample.second_moment() == pytest.approx(14 / 3)
    with pytest.raises(ValueError):
        sample.values[0] = 5.0


def test_ks_threshold():
    assert gof_stats.ks_threshold(10_000) == pytest.approx(0.0136)
    assert gof_stats.ks_threshold(10_000, 1.5) == pytest.approx(0.0204)


def test_ks_distance_single_point():
    sample = gof_stats.EmpiricalSample.from_values([0.0])
    assert gof_stats.ks_distance(sample, sc.make_params(1.0)) == pytest.approx(0.5)
    with pytest.raises(sc.DomainError):
        gof_stats.ks_distance(gof_stats.EmpiricalSample.from_values([]), sc.make_params(1.0))


def test_ks_accepts_right_law_rejects_wrong_one():
    sample = cauchy_sample()
    right = gof_stats.gof_report(sample, sc.make_params(1.0), multiple=1.5, with_qq=False)
    wrong = gof_stats.gof_report(sample, sc.make_params(1.0, 2.0), multiple=1.5, with_qq=False)
    assert right.passed, f"KS {right.ks} against the sampled law"
    assert not wrong.passed and wrong.ks > 0.06, f"KS {wrong.ks} should see the doubled scale"


def test_ks_matches_scipy_for_cauchy():
    sample = cauchy_sample(500)
    ours = gof_stats.ks_distance(sample, sc.make_params(1.0))
    theirs = stats.kstest(sample.values, "cauchy").statistic
    assert ours == pytest.approx(theirs, abs=1e-7)


def test_qq_points_and_json():
    sample = cauchy_sample(1000)
    report = gof_stats.gof_report(sample, sc.make_params(1.0))
    assert len(report.qq) == 99
    theory = [a for a, _ in report.qq]
    assert theory == sorted(theory) and theory[49] == 0.0, "median of SaS is 0"
    assert theory[74] == pytest.approx(1.0, abs=0.02), "p=0.75 Cauchy quantile"
    data = json.loads(json.dumps(report.to_json()))
    assert set(data) == {"ks", "reference", "sample_count", "pass", "threshold", "qq"}
    assert gof_stats.GoFReport.from_json(data) == report


def test_two_sample_ks():
    a = ab.iid_sample(sc.make_params(1.0), 1, 3000)
    b = ab.iid_sample(sc.make_params(1.0), 2, 3000)
    c = ab.iid_sample(sc.make_params(1.0, 3.0), 2, 3000)
    assert gof_stats.ks_two_sample(a, b) < 0.06
    assert gof_stats.ks_two_sample(a, c) > 0.1


def test_ecf():
    zeros = gof_stats.EmpiricalSample.from_values([0.0] * 10)
    assert gof_stats.ecf(zeros, [0.0, 1.0, 5.0]) == [(0.0, 1.0), (1.0, 1.0), (5.0, 1.0)]
    signs = gof_stats.EmpiricalSample.from_values([-1.0, 1.0])
    ((theta, value),) = gof_stats.ecf(signs, [math.pi / 2])
    assert value == pytest.approx(0.0, abs=1e-15), "cos(pi/2) averaged over +-1"
    with pytest.raises(sc.DomainError):
        gof_stats.ecf(zeros, [])


def test_trend_inverse_log_passes_on_c_over_log():
    grid = [256, 1024, 4096, 16384]
    values = [(n, 3.0 / math.log2(n)) for n in grid]
    verdict = gof_stats.trend_check(values, gof_stats.Trend.INVERSE_LOG)
    assert verdict.passed and verdict.fitted_c == pytest.approx(3.0)
    assert verdict.scaled == pytest.approx((3.0, 3.0, 3.0, 3.0))


def test_trend_inverse_log_fails_on_constant_far_from_fit():
    values = [(2**2, 1.0), (2**4, 1.0), (2**20, 1.0)]
    verdict = gof_stats.trend_check(values, "bounded_by_c_over_log_n")
    assert not verdict.passed, "a constant statistic is not c/log n over this range"


def test_trend_inverse_log_fails_on_increasing_statistic():
    verdict = gof_stats.trend_check([(2**8, 0.10), (2**12, 0.11), (2**16, 0.12)], "bounded_by_c_over_log_n")
    assert not verdict.monotone and verdict.violations == ((256, 4096), (4096, 65536))
    assert not verdict.passed, "a rising statistic cannot be c/log n"


def test_trend_decreasing():
    down = gof_stats.trend_check([(256, 0.3), (1024, 0.2), (4096, 0.1)], gof_stats.Trend.DECREASING)
    assert down.passed and down.monotone
    up = gof_stats.trend_check([(256, 0.1), (1024, 0.2), (4096, 0.15)], gof_stats.Trend.DECREASING)
    assert not up.passed and up.violations == ((256, 1024),)
    noisy = gof_stats.trend_check(
        [(256, 0.1), (1024, 0.11), (4096, 0.05)], gof_stats.Trend.DECREASING, standard_errors=[0.01] * 3
    )
    assert noisy.passed, "a rise within 3 standard errors is not a violation"
    with pytest.raises(sc.DomainError):
        gof_stats.trend_check([(256, 0.1), (1024, 0.2)], gof_stats.Trend.DECREASING)


def test_csv_writers(tmp_path):
    sample = cauchy_sample(200)
    report = gof_stats.gof_report(sample, sc.make_params(1.0))
    qq = pd.read_csv(gof_stats.write_qq_csv(tmp_path / "qq.csv", report))
    assert list(qq.columns) == ["p", "q_theory", "q_empirical"] and len(qq) == 99
    ecf = pd.read_csv(gof_stats.write_ecf_csv(tmp_path / "ecf.csv", gof_stats.ecf(sample, [0.5, 1.0])))
    assert list(ecf.columns) == ["theta", "ecf_abs"]

    frame = pd.DataFrame({"replica": [0, 1], "total": [0.1, 1 / 3]})
    gof_stats.write_samples_csv(tmp_path / "samples.csv", frame)
    back = gof_stats.read_samples_csv(tmp_path / "samples.csv")
    assert back.values.tolist() == [0.1, 1 / 3], "%.17g keeps doubles exact"
    assert np.array_equal(gof_stats.read_samples_csv(tmp_path / "samples.csv", "replica").values, [0.0, 1.0])
