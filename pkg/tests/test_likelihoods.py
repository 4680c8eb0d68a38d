import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tempered_opt.likelihoods import (
    FAMILIES,
    LikelihoodSpec,
    beta_log_h,
    binomial_log_h,
    exp_log_h,
    log_beta_f,
    log_binomial_f,
    log_pseudo_likelihood,
)


def exact_log_f(x: int, T: int) -> float:
    """log of C(T,x) x^x (T-x)^(T-x) / T^T from exact integers (0^0 = 1)."""
    num = math.comb(T, x) * x**x * (T - x) ** (T - x)
    return math.log(num) - T * math.log(T)


@pytest.mark.parametrize("T", [2, 3, 7, 50, 171, 200])
def test_log_f_matches_exact_integers(T):
    for x in range(T + 1):
        assert log_binomial_f(x, T) == pytest.approx(exact_log_f(x, T), rel=1e-12, abs=1e-12)


def test_binomial_examples():
    spec = LikelihoodSpec("binomial", 1.0, 4)
    assert binomial_log_h(4, spec) == 0.0
    assert binomial_log_h(0, spec) == -math.inf
    assert binomial_log_h(2, spec) == pytest.approx(math.log(0.375), abs=1e-12)
    assert binomial_log_h(2, spec) == pytest.approx(-0.98083, abs=1e-5)


def test_beta_examples():
    spec = LikelihoodSpec("beta", 1.0, 10)
    assert beta_log_h(10, spec) == pytest.approx(0.0, abs=1e-14)
    assert beta_log_h(5, spec) == pytest.approx(math.log(2 / math.pi), abs=1e-12)
    assert beta_log_h(0, spec) == -math.inf


def test_exponential_examples():
    assert exp_log_h(0.0, LikelihoodSpec("exponential", 3.0)) == 0.0
    assert exp_log_h(1.0, LikelihoodSpec("exponential", 20.0)) == 20.0
    assert exp_log_h(-0.1485, LikelihoodSpec("exponential", 50.0)) == pytest.approx(-7.425)


def test_dispatch_examples():
    assert log_pseudo_likelihood(LikelihoodSpec("binomial", 1.0, 10), 10) == 0.0
    assert log_pseudo_likelihood(LikelihoodSpec("exponential", 1.0), 0.5) == 0.5


def test_out_of_range_counts_rejected():
    spec = LikelihoodSpec("binomial", 1.0, 5)
    for k in (-1, 6):
        with pytest.raises(ValueError):
            binomial_log_h(k, spec)
        with pytest.raises(ValueError):
            beta_log_h(k, LikelihoodSpec("beta", 1.0, 5))


def test_fractional_count_rejected():
    with pytest.raises(ValueError):
        log_pseudo_likelihood(LikelihoodSpec("binomial", 1.0, 5), 2.5)


@pytest.mark.parametrize("bad", [dict(family="poisson"), dict(family="beta", beta_sharp=0), dict(family="beta", trials=0)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        LikelihoodSpec(**bad)


def test_f_symmetric_and_minimal_at_half():
    for T in range(2, 201):
        vals = [exact_log_f(x, T) for x in range(T + 1)]
        for x in range(T + 1):
            assert log_binomial_f(x, T) == pytest.approx(log_binomial_f(T - x, T), rel=1e-12, abs=1e-12)
        mins = {T // 2, (T + 1) // 2}
        assert int(np.argmin(vals)) in mins
        assert min(vals) == pytest.approx(vals[T // 2], abs=1e-12)


def test_junction_continuity_even_T():
    for T in range(2, 201, 2):
        f_half = math.exp(log_binomial_f(T / 2, T))
        g_half = (2 / T) * f_half * (T / 2)
        assert abs(g_half - f_half) < 1e-12
        # the lower branch evaluated at T/2 agrees with the upper branch there
        spec = LikelihoodSpec("binomial", 1.0, T)
        below = math.log(2 / T) + log_binomial_f(T / 2, T) + math.log(T / 2)
        assert below == pytest.approx(binomial_log_h(T // 2, spec), abs=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("beta", [1.0, 20.0, 100.0])
def test_monotone_nondecreasing(family, beta):
    for T in range(1, 201):
        spec = LikelihoodSpec(family, beta, T)
        vals = [log_pseudo_likelihood(spec, k / T if family == "exponential" else k) for k in range(T + 1)]
        assert all(b >= a for a, b in zip(vals, vals[1:])), (family, T)


def test_monotone_exhaustive_to_500():
    for family in ("binomial", "beta"):
        for T in (250, 333, 499, 500):
            spec = LikelihoodSpec(family, 1.0, T)
            vals = [log_pseudo_likelihood(spec, k) for k in range(T + 1)]
            assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_lower_branch_slope_is_one_over_k():
    # on the linear branch d/dk log h = beta / k for both count families
    for family in ("binomial", "beta"):
        spec = LikelihoodSpec(family, 3.0, 100)
        h = lambda k: log_pseudo_likelihood(spec, k)
        for k in (5, 10, 20):
            assert h(2 * k) - h(k) == pytest.approx(3.0 * math.log(2), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 300), st.data(), st.floats(0.01, 50), st.floats(0.01, 50), st.sampled_from(["binomial", "beta"]))
def test_sharpness_amplifies_differences(T, data, b1, b2, family):
    k1 = data.draw(st.integers(1, T))
    k2 = data.draw(st.integers(k1, T))
    lo, hi = sorted((b1, b2))
    d = lambda b: (log_pseudo_likelihood(LikelihoodSpec(family, b, T), k2)
                   - log_pseudo_likelihood(LikelihoodSpec(family, b, T), k1))
    assert d(hi) >= d(lo) - 1e-9


def test_beta_f_half_closed_form():
    # Gamma(1.5)^2 = pi/4
    assert log_beta_f(0.5) == pytest.approx(math.log(0.5 / (math.pi / 4)), abs=1e-14)
