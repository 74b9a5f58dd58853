import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sievelab.distributions import Beta, PointMass, RightLogPareto, TwoSidedLogPareto, Uniform01
from sievelab.renewal import occupancy_range_series, simulate_walk
from sievelab.rng import trial_rng
from sievelab.sieve import (
    DIRECT_MAX_N,
    EMPTY_OUTCOME,
    KernelSpec,
    RoundCapExceeded,
    delay_absorb_kernel,
    sieve_kernel,
    simulate_poissonized,
    simulate_sieve_direct,
    simulate_sieve_thinning,
    simulate_zero_decrements,
    simulate_zero_decrements_geomrep,
    thinning_survivors,
    uniform_descent_kernel,
)
from sievelab.stats import chisq_geometric, ks_two_sample

LAWS = [Uniform01(), Beta(2, 3), PointMass(0.5), RightLogPareto(0.5), TwoSidedLogPareto(1 / 3, 0.5, 0.5)]


def _many(fn, trials, seed):
    return np.array([fn(trial_rng(seed, i)) for i in range(trials)])


@given(
    law=st.sampled_from(LAWS),
    n=st.one_of(st.integers(0, 300), st.integers(10**6, 10**15)),
    seed=st.integers(0, 2**32),
)
@settings(max_examples=80, deadline=None)
def test_thinning_outcome_invariants(law, n, seed):
    out = simulate_sieve_thinning(law, n, trial_rng(seed, 0))
    assert out.l_empty == out.m_range - out.k_occupied >= 0
    assert out.k_occupied <= min(n, out.m_range)
    if n >= 1:
        assert out.k_occupied >= 1
    else:
        assert out == EMPTY_OUTCOME


@given(law=st.sampled_from(LAWS[:4]), n=st.integers(0, 2000), seed=st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_direct_outcome_invariants(law, n, seed):
    out = simulate_sieve_direct(law, n, trial_rng(seed, 0))
    assert out.l_empty == out.m_range - out.k_occupied >= 0
    assert (out.k_occupied >= 1) == (n >= 1)


def test_direct_size_limit():
    with pytest.raises(ValueError):
        simulate_sieve_direct(Uniform01(), DIRECT_MAX_N + 1, trial_rng(0, 0))


def test_near_one_point_mass_rarely_empty():
    # a ball survives a round with probability W = 0.001, so an empty round
    # needs every remaining ball to survive
    ls = _many(lambda r: simulate_sieve_thinning(PointMass(0.001), 10, r).l_empty, 10**4, 1)
    assert np.mean(ls == 0) >= 0.99


def test_single_ball_uniform():
    out = _many(lambda r: tuple(simulate_sieve_thinning(Uniform01(), 1, r)), 20000, 2)
    assert (out[:, 0] == 1).all()
    p0 = np.mean(out[:, 2] == 0)
    assert abs(p0 - 0.5) < 4 * math.sqrt(0.25 / 20000)


def test_single_ball_direct_point_mass_half():
    # intervals have lengths 2^-k, so M_1 is geometric on {1, 2, ...}
    m = _many(lambda r: simulate_sieve_direct(PointMass(0.5), 1, r).m_range, 20000, 3)
    for k in (1, 2, 3, 4):
        p = 2.0**-k
        assert abs(np.mean(m == k) - p) < 4 * math.sqrt(p * (1 - p) / 20000)


def test_uniform_thinning_is_geometric_half():
    ls = _many(lambda r: simulate_sieve_thinning(Uniform01(), 100, r).l_empty, 20000, 4)
    assert chisq_geometric(ls, 0.5).passed


def test_direct_matches_thinning_uniform():
    a = _many(lambda r: simulate_sieve_direct(Uniform01(), 10**4, r).l_empty, 5000, 5)
    b = _many(lambda r: simulate_sieve_thinning(Uniform01(), 10**4, r).l_empty, 5000, 6)
    assert ks_two_sample(a, b).p_value > 1e-3


def test_survivor_count_mean_at_huge_n():
    n, x = 10**12, 0.3
    rng = trial_rng(7, 0)
    stay = np.array([thinning_survivors(rng, n, x, 1 - x) for _ in range(10**5)], dtype=float)
    sd = math.sqrt(n * x * (1 - x))
    assert abs(stay.mean() - n * x) < 5 * sd / math.sqrt(stay.size)
    assert stay.std() == pytest.approx(sd, rel=0.02)


def test_survivors_near_one_use_small_side():
    rng = trial_rng(8, 0)
    # W = 1 - 1e-17 is not representable; the small side keeps the exact law
    s = [thinning_survivors(rng, 10**15, 1.0, 1e-17) for _ in range(2000)]
    lost = 10**15 - np.array(s)
    assert abs(lost.mean() - 0.01) < 4 * math.sqrt(0.01 / 2000)


def test_direct_monotone_in_n_with_shared_streams():
    for seed in range(30):
        ms = [
            simulate_sieve_direct(Beta(2, 3), n, trial_rng(seed, 0), w_rng=trial_rng(seed, 1)).m_range
            for n in (1, 5, 20, 100, 1000)
        ]
        assert ms == sorted(ms)


def test_round_cap():
    with pytest.raises(RoundCapExceeded):
        simulate_sieve_thinning(RightLogPareto(0.5), 10**6, trial_rng(0, 0), round_cap=5)


# ---------------------------------------------------------------- poissonized


def test_poissonized_small_t_is_empty():
    outs = _many(lambda r: simulate_poissonized(Uniform01(), 0.01, r).m_range, 20000, 9)
    p = math.exp(-0.01)
    assert abs(np.mean(outs == 0) - p) < 4 * math.sqrt(p * (1 - p) / 20000)
    with pytest.raises(ValueError):
        simulate_poissonized(Uniform01(), 0.0, trial_rng(0, 0))


@pytest.mark.parametrize("law", [Beta(2, 3), RightLogPareto(0.5)], ids=repr)
def test_poissonized_mean_range_matches_series(law):
    t, trials = 50.0, 4000
    m = _many(lambda r: simulate_poissonized(law, t, r).m_range, trials, 10)
    series = np.array(
        [occupancy_range_series(simulate_walk(law, math.log(t) + 40, trial_rng(11, i)), t) for i in range(trials)]
    )
    se = math.sqrt(m.var() / trials + series.var() / trials)
    assert abs(m.mean() - series.mean()) < 4 * se


def test_poissonized_close_to_fixed_n():
    a = _many(lambda r: simulate_poissonized(Uniform01(), 100.0, r).l_empty, 5000, 12)
    b = _many(lambda r: simulate_sieve_thinning(Uniform01(), 100, r).l_empty, 5000, 13)
    assert ks_two_sample(a, b).p_value > 1e-3


# ---------------------------------------------------------------- chains


def test_no_delay_kernel_gives_zero():
    k = uniform_descent_kernel()
    for n in (0, 1, 5, 50):
        assert simulate_zero_decrements(k, n, trial_rng(n, 0)) == 0
        assert simulate_zero_decrements_geomrep(k, n, trial_rng(n, 1)) == 0


def test_absorbing_start():
    k = delay_absorb_kernel(0.5, absorbing=3)
    assert simulate_zero_decrements(k, 3, trial_rng(0, 0)) == 0
    assert simulate_zero_decrements_geomrep(k, 3, trial_rng(0, 0)) == 0
    with pytest.raises(ValueError):
        simulate_zero_decrements(k, 2, trial_rng(0, 0))


@pytest.mark.parametrize("n", [1, 7, 100])
def test_delay_absorb_kernel_is_geometric(n):
    k = delay_absorb_kernel(0.5)
    a = _many(lambda r: simulate_zero_decrements(k, n, r), 20000, 14)
    b = _many(lambda r: simulate_zero_decrements_geomrep(k, n, r), 20000, 15)
    assert chisq_geometric(a, 0.5).passed
    assert chisq_geometric(b, 0.5).passed


def test_uniform_kernel_matches_thinning():
    k = sieve_kernel(Uniform01())
    a = _many(lambda r: simulate_zero_decrements(k, 100, r), 20000, 16)
    b = _many(lambda r: simulate_zero_decrements_geomrep(k, 100, r), 20000, 17)
    c = _many(lambda r: simulate_sieve_thinning(Uniform01(), 100, r).l_empty, 20000, 18)
    assert ks_two_sample(a, c).p_value > 1e-3
    assert ks_two_sample(b, c).p_value > 1e-3
    assert ks_two_sample(a, b).p_value > 1e-3


@pytest.mark.parametrize("law", [Uniform01(), Beta(2, 3), Beta(0.4, 1.7), PointMass(0.3)], ids=repr)
def test_sieve_kernel_rows(law):
    k = sieve_kernel(law)
    for i in (1, 2, 10, 200):
        row = np.asarray(k.row(i))
        assert row.sum() == pytest.approx(1.0, abs=1e-12)
        assert row[i] == pytest.approx(k.pi_delay(i), rel=1e-10)
        assert row[0] == pytest.approx(k.pi_absorb(i), rel=1e-10)


def test_beta_kernel_row_against_monte_carlo():
    law = Beta(2, 3)
    row = sieve_kernel(law).row(6)
    w = law.sample(trial_rng(19, 0), 10**6)
    j = trial_rng(19, 1).binomial(6, w)
    emp = np.bincount(j, minlength=7) / w.size
    assert np.allclose(emp, row, atol=4 * math.sqrt(0.25 / w.size))


def test_kernel_without_sieve_form():
    with pytest.raises(ValueError):
        sieve_kernel(RightLogPareto(0.5))


def test_kernel_validation():
    with pytest.raises(ValueError):
        KernelSpec(row=lambda i: np.full(i + 1, 0.5))
    with pytest.raises(ValueError):
        KernelSpec(row=lambda i: np.eye(i + 1)[i])
    with pytest.raises(ValueError):
        KernelSpec(sampler=lambda i, rng: 0)
    # jumping below the absorbing state
    with pytest.raises(ValueError):
        KernelSpec(absorbing=2, row=lambda i: np.eye(i + 1)[0])


def test_generic_absorbing_level():
    k = delay_absorb_kernel(0.25, absorbing=4)
    a = _many(lambda r: simulate_zero_decrements(k, 50, r), 20000, 20)
    assert chisq_geometric(a, 0.75).passed
