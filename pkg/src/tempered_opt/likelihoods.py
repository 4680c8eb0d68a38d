"""Tempered pseudo-likelihoods of a success count or score, in log space.

Each family maps an objective value to ``beta * log h(.)`` where ``h`` is
monotone nondecreasing, so larger objectives are always at least as likely.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import inf, lgamma, log

import numpy as np

FAMILIES = ("binomial", "beta", "exponential")


@dataclass(frozen=True)
class LikelihoodSpec:
    family: str
    beta_sharp: float = 1.0
    trials: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown likelihood family {self.family!r}")
        if not self.beta_sharp > 0:
            raise ValueError("beta_sharp must be positive")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")


def _xlogy(x: float, y: float) -> float:
    # 0 * log 0 = 0, i.e. 0^0 = 1
    return 0.0 if x == 0 else x * log(y)


def log_binomial_f(x: float, T: int) -> float:
    """log of C(T,x) (x/T)^x (1-x/T)^(T-x), with gamma functions for real x."""
    p = x / T
    return (
        lgamma(T + 1) - lgamma(x + 1) - lgamma(T - x + 1)
        + _xlogy(x, p) + _xlogy(T - x, 1.0 - p)
    )


def log_beta_f(x: float) -> float:
    """log of Gamma(2)/(Gamma(x+1)Gamma(2-x)) x^x (1-x)^(1-x) on [0, 1]."""
    return -lgamma(x + 1) - lgamma(2 - x) + _xlogy(x, x) + _xlogy(1 - x, 1 - x)


def _check_k(k, T):
    if not (0 <= k <= T):
        raise ValueError(f"success count {k} outside [0, {T}]")


def binomial_log_h(k: int, spec: LikelihoodSpec) -> float:
    T = spec.trials
    _check_k(k, T)
    if k == 0:
        return -inf
    if k >= T / 2:
        return spec.beta_sharp * log_binomial_f(k, T)
    # linear branch a*x with a = (2/T) f(T/2)
    log_a = log(2.0 / T) + log_binomial_f(T / 2, T)
    return spec.beta_sharp * (log_a + log(k))


def beta_log_h(k: int, spec: LikelihoodSpec) -> float:
    T = spec.trials
    _check_k(k, T)
    if k == 0:
        return -inf
    x = k / T
    if x >= 0.5:
        return spec.beta_sharp * log_beta_f(x)
    return spec.beta_sharp * (log(2.0) + log_beta_f(0.5) + log(x))


def exp_log_h(ratio: float, spec: LikelihoodSpec) -> float:
    return spec.beta_sharp * float(ratio)


def log_pseudo_likelihood(spec: LikelihoodSpec, value) -> float:
    """Dispatch on the family. Count families take an integer in [0, trials]."""
    if spec.family == "exponential":
        return exp_log_h(value, spec)
    if isinstance(value, (float, np.floating)) and not float(value).is_integer():
        raise ValueError(f"{spec.family} likelihood needs an integer count, got {value}")
    k = int(value)
    if spec.family == "binomial":
        return binomial_log_h(k, spec)
    return beta_log_h(k, spec)
