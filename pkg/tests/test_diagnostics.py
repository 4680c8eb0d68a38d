import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tempered_opt import diagnostics as dg
from tempered_opt.rng import InvGammaParams, sample_inv_gamma, seeded_rng


def inv_gamma(rng, shape, rate, n):
    return sample_inv_gamma(InvGammaParams(shape, rate), rng, n)


def ar1(rho, n, seed):
    e = seeded_rng(seed).standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - rho * rho)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    return x


def test_ess_iid():
    x = seeded_rng(0).standard_normal(10_000)
    assert dg.ess_univariate(x) == pytest.approx(10_000, rel=0.10)


def test_ess_ar1():
    assert dg.ess_univariate(ar1(0.5, 10_000, 1)) == pytest.approx(10_000 / 3, rel=0.15)


def test_ess_alternating_clipped():
    x = np.tile([1.0, -1.0], 500)
    assert dg.ess_univariate(x) == 1000


def test_ess_constant_flag(caplog):
    assert dg.ess_univariate(np.ones(50)) == 0.0
    assert "constant" in caplog.text


def test_ess_short_series():
    with pytest.raises(ValueError):
        dg.ess_univariate(np.arange(5.0))


def test_autocorrelation_matches_direct():
    x = seeded_rng(2).standard_normal(200)
    y = x - x.mean()
    direct = np.array([np.dot(y[: 200 - k], y[k:]) for k in range(200)]) / np.dot(y, y)
    assert np.allclose(dg.autocorrelation(x), direct)


def test_multi_ess_iid():
    X = seeded_rng(3).standard_normal((10_000, 3))
    assert dg.ess_multivariate(X) == pytest.approx(10_000, rel=0.15)


def test_multi_ess_duplicated_samples():
    X = seeded_rng(4).standard_normal((10_000, 3))
    assert dg.ess_multivariate(np.repeat(X, 2, axis=0)) == pytest.approx(dg.ess_multivariate(X), rel=0.20)


def test_multi_ess_one_dim_matches_univariate():
    x = ar1(0.3, 10_000, 5)
    assert dg.ess_multivariate(x[:, None]) == pytest.approx(dg.ess_univariate(x), rel=0.15)


def test_multi_ess_singular_fallback(caplog):
    x = seeded_rng(6).standard_normal(2000)
    X = np.column_stack([x, 2 * x])
    val, flag = (lambda r: (r.value, r.fallback))(dg.ess_multivariate(X, return_flag=True))
    assert flag and val == pytest.approx(dg.ess_univariate(x))


def test_multi_ess_needs_more_rows():
    with pytest.raises(ValueError):
        dg.ess_multivariate(np.zeros((3, 3)))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 1000))
def test_ess_scale_invariance(c, seed):
    x = ar1(0.4, 1000, seed)
    assert dg.ess_univariate(c * x) == pytest.approx(dg.ess_univariate(x), rel=1e-9)
    X = np.column_stack([x, seeded_rng(seed, 1).standard_normal(1000)])
    assert dg.ess_multivariate(c * X) == pytest.approx(dg.ess_multivariate(X), rel=1e-9)


def test_fit_inv_gamma_round_trip():
    s = inv_gamma(seeded_rng(7), 5.0, 2.0, 1_000_000)
    shape, rate = dg.fit_inv_gamma(s)
    assert shape == pytest.approx(5, rel=0.03) and rate == pytest.approx(2, rel=0.03)


@pytest.mark.parametrize("shape", [3.5, 10, 40, 100])
def test_fit_inv_gamma_shapes(shape):
    s = inv_gamma(seeded_rng(8), shape, 3.0, 400_000)
    a, b = dg.fit_inv_gamma(s)
    assert a == pytest.approx(shape, rel=0.1) and b == pytest.approx(3.0, rel=0.1)


def test_fit_inv_gamma_errors():
    with pytest.raises(ValueError):
        dg.fit_inv_gamma([1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        dg.fit_inv_gamma([1.0, -1.0])


def test_trend_examples():
    assert dg.trend_stat(np.arange(200.0)) == pytest.approx(1.0)
    assert dg.trend_stat(-np.arange(200.0)) == pytest.approx(-1.0)
    taus = [dg.trend_stat(seeded_rng(s).standard_normal(1000)) for s in range(100)]
    assert max(abs(t) for t in taus) < 0.06


def test_trend_matches_pair_count():
    x = seeded_rng(9).standard_normal(150)
    pairs = list(itertools.combinations(range(150), 2))
    conc = sum(np.sign(x[j] - x[i]) for i, j in pairs)
    assert dg.trend_stat(x) == pytest.approx(conc / len(pairs))


def test_trend_short_and_constant():
    with pytest.raises(ValueError):
        dg.trend_stat(np.arange(10.0))
    assert dg.trend_stat(np.ones(100)) == 0.0


def test_summarize_chain_json():
    import json
    rng = seeded_rng(10)
    X = rng.standard_normal((500, 2))
    s = dg.summarize_chain(X, inv_gamma(rng, 4.0, 1.0, 500), (X ** 2).sum(1))
    d = json.loads(s.to_json())
    assert set(d) >= {"ess", "ess_per_dim", "invgamma_shape", "invgamma_rate", "trend_tau"}
    assert 0 < d["ess"] <= 500 and len(d["ess_per_dim"]) == 2
