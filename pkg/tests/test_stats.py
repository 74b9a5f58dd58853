import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sievelab.distributions import StableSpec, sample_limit_integral, sample_stable_z1
from sievelab.stats import (
    TestReport,
    chisq_geometric,
    empirical_cf,
    geometric_pmf,
    ks_one_sample_normal,
    ks_two_sample,
    normal_cdf,
    stable_fallback,
    summarize,
)


def _geom(rng, a, size):
    # numpy's geometric counts trials, ours counts failures
    return rng.geometric(a, size) - 1


def test_geometric_pmf_sums_to_one():
    k = np.arange(0, 400)
    assert geometric_pmf(0.3, k).sum() == pytest.approx(1.0, abs=1e-12)
    assert geometric_pmf(0.5, 0) == 0.5


def test_chisq_accepts_true_law():
    rng = np.random.default_rng(1)
    rep = chisq_geometric(_geom(rng, 1 / 3, 10**5), 1 / 3)
    assert rep.passed and rep.details["dof"] >= 10


def test_chisq_rejects_wrong_parameter():
    rng = np.random.default_rng(2)
    rep = chisq_geometric(_geom(rng, 0.45, 10**5), 0.5)
    assert not rep.passed and rep.p_value < 1e-10


def test_chisq_pooling_keeps_expected_counts():
    rng = np.random.default_rng(3)
    rep = chisq_geometric(_geom(rng, 0.5, 200), 0.5)
    # 200 * 2^-k >= 5 leaves cells {0..5} and the pooled tail
    assert rep.details["cells"] <= 7


def test_chisq_input_validation():
    with pytest.raises(ValueError):
        chisq_geometric(np.zeros(50, dtype=int), 0.5)
    with pytest.raises(ValueError):
        chisq_geometric(-np.ones(200, dtype=int), 0.5)


def test_chisq_null_calibration():
    # under the null the p-values are roughly uniform
    rng = np.random.default_rng(4)
    p = np.array([chisq_geometric(_geom(rng, 0.5, 2000), 0.5).p_value for _ in range(400)])
    assert stats.kstest(p, "uniform").pvalue > 1e-3
    assert np.mean(p < 0.05) < 0.1


def test_ks_two_sample_matches_scipy():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=3000), rng.normal(0.05, 1.0, size=2000)
    ours = ks_two_sample(x, y)
    ref = stats.ks_2samp(x, y, method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-15)
    # both p-values are asymptotic: the Kolmogorov limit against scipy's effective-n law
    assert ours.p_value == pytest.approx(ref.pvalue, rel=0.05)


def test_ks_two_sample_ties_and_errors():
    rep = ks_two_sample([0, 0, 1, 1], [0, 1, 1, 1])
    assert rep.statistic == pytest.approx(0.25)
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_ks_two_sample_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.exponential(size=300), rng.exponential(size=200)
    a = ks_two_sample(x, y)
    b = ks_two_sample(rng.permutation(x), rng.permutation(y))
    c = ks_two_sample(y, x)
    assert a.statistic == b.statistic == c.statistic
    assert a.p_value == b.p_value


def test_ks_normal_matches_scipy():
    z = np.random.default_rng(6).normal(size=5000)
    ours = ks_one_sample_normal(z)
    ref = stats.kstest(z, "norm", method="exact")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-14)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-6)
    assert ours.passed


def test_ks_normal_rejects_shift():
    z = np.random.default_rng(7).normal(0.2, 1.0, size=5000)
    assert not ks_one_sample_normal(z).passed


def test_normal_cdf_tails():
    assert normal_cdf(-40.0) == pytest.approx(stats.norm.cdf(-40.0), rel=1e-12)
    assert normal_cdf(0.0) == 0.5


def test_empirical_cf_of_normal():
    z = np.random.default_rng(8).normal(size=10**5)
    u = np.array([-1.0, 0.5, 2.0])
    assert np.allclose(empirical_cf(z, u), np.exp(-(u**2) / 2), atol=4 / math.sqrt(z.size))


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_stable_sampler_cf(alpha):
    spec = StableSpec(alpha)
    z = sample_stable_z1(spec, np.random.default_rng(9), 2 * 10**5)
    u = np.array([-1.0, -0.5, 0.5, 1.0])
    assert np.allclose(empirical_cf(z, u), spec.cf(u), atol=4 / math.sqrt(z.size))


def test_summary_moments_and_intervals():
    x = np.random.default_rng(10).exponential(size=4000)
    s = summarize(x, rng=np.random.default_rng(0), resamples=400)
    assert s.mean_ci[0] < 1.0 < s.mean_ci[1]
    assert s.variance_ci[0] < 1.0 < s.variance_ci[1]
    assert s.skewness_ci[0] < 2.0 < s.skewness_ci[1]
    again = summarize(x, rng=np.random.default_rng(0), resamples=400)
    assert s == again
    with pytest.raises(ValueError):
        summarize([1.0, 2.0])


def test_stable_fallback():
    rng = np.random.default_rng(11)
    limit = sample_limit_integral(1.5, 0.2, rng, 20000)
    same = sample_limit_integral(1.5, 0.2, rng, 5000)
    assert stable_fallback(same, limit).passed
    assert not stable_fallback(-same, limit).passed
    assert not stable_fallback(same + 10.0, limit).passed


def test_report_serialization():
    rep = TestReport("x", 1.0, 0.5, 1e-3, True, {"n": 3})
    d = rep.to_dict()
    assert d["pass"] is True and "passed" not in d and d["details"] == {"n": 3}
