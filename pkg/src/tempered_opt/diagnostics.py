"""Chain diagnostics: effective sample sizes, inverse-gamma fits, trend tests."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation at all lags (biased estimator, FFT)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    y = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    return acov / acov[0]


def ess_univariate(series) -> float:
    """n / tau with tau from Geyer's initial positive sequence, clipped to (0, n].

    A constant series returns 0.0 and logs a warning.
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    if n < 10:
        raise ValueError("need at least 10 points")
    if np.ptp(x) == 0:
        log.warning("constant series: ESS reported as 0")
        return 0.0
    rho = autocorrelation(x)
    tau = -1.0
    for m in range(n // 2):
        g = rho[2 * m] + rho[2 * m + 1]
        if g <= 0:
            break
        tau += 2.0 * g
    if tau <= 0:
        return float(n)
    return float(min(n / tau, n))


@dataclass
class MultiESS:
    value: float
    fallback: bool = False


def ess_multivariate(samples, return_flag: bool = False):
    """n (det Lambda / det Sigma_bm)^(1/S) with batch size floor(sqrt(n))."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, S = X.shape
    if n <= S:
        raise ValueError("need more samples than dimensions")
    bsize = int(np.floor(np.sqrt(n)))
    a = n // bsize
    means = X[: a * bsize].reshape(a, bsize, S).mean(axis=1)
    lam = np.atleast_2d(np.cov(X, rowvar=False))
    sig = bsize * np.atleast_2d(np.cov(means, rowvar=False))
    s1, ld_lam = np.linalg.slogdet(lam)
    s2, ld_sig = np.linalg.slogdet(sig)
    if s1 <= 0 or s2 <= 0 or not np.isfinite(ld_lam + ld_sig):
        log.warning("singular covariance: falling back to the smallest per-dimension ESS")
        per = [ess_univariate(X[:, i]) for i in range(S)]
        out = MultiESS(float(min(per)), True)
    else:
        out = MultiESS(float(min(n * np.exp((ld_lam - ld_sig) / S), n)), False)
    return out if return_flag else out.value


def fit_inv_gamma(samples) -> tuple:
    """Method of moments: shape = mean^2/var + 2, rate = mean (shape - 1)."""
    x = np.asarray(samples, dtype=float)
    if np.any(x <= 0):
        raise ValueError("inverse-gamma samples must be positive")
    m = x.mean()
    v = x.var(ddof=1)
    if v == 0:
        raise ValueError("zero variance: cannot fit")
    shape = m * m / v + 2.0
    return float(shape), float(m * (shape - 1.0))


def trend_stat(series) -> float:
    """Kendall tau between position and value."""
    x = np.asarray(series, dtype=float)
    if x.shape[0] < 100:
        raise ValueError("need at least 100 points")
    tau = stats.kendalltau(np.arange(x.shape[0]), x).statistic
    return float(tau) if np.isfinite(tau) else 0.0


@dataclass
class ChainSummary:
    ess: float
    ess_per_dim: list
    invgamma_shape: float
    invgamma_rate: float
    trend_tau: float
    ess_fallback: bool = False

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2)


def summarize_chain(samples, sigma2, theta_norm2) -> ChainSummary:
    samples = np.asarray(samples, dtype=float)
    m = ess_multivariate(samples, return_flag=True) if samples.shape[0] > samples.shape[1] else MultiESS(float("nan"), True)
    per = [ess_univariate(samples[:, i]) for i in range(samples.shape[1])] if samples.shape[0] >= 10 else []
    try:
        shape, rate = fit_inv_gamma(sigma2)
    except ValueError:
        shape = rate = float("nan")
    tau = trend_stat(theta_norm2) if len(theta_norm2) >= 100 else float("nan")
    return ChainSummary(m.value, per, shape, rate, tau, m.fallback)
