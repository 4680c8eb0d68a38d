"""Two-block adaptive Metropolis-within-Gibbs sampler.

Block 1 moves theta by a Gaussian random walk whose covariance is learned
from a strided subsample of the chain history during burn-in. Block 2 draws
the prior dispersion sigma^2 from its inverse-gamma full conditional.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rng import InvGammaParams, RngHandle, sample_inv_gamma, sample_mvn

LogLik = Callable[[np.ndarray], float]


class ChainError(RuntimeError):
    pass


@dataclass
class ChainConfig:
    iterations: int = 100_000
    burn_in: int = 20_000
    sigma_init2: float = 1.0
    stride: int = 1000
    window: int = 100
    jitter: float = 1e-6
    kappa: float = 0.6
    a: float = 1e-6
    b: float = 1e-6
    s2_init: float = 1.0
    target_accept: float = 0.234
    accept_window: int = 500
    thin: int = 1

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.stride < 1 or self.window < 1:
            raise ValueError("stride and window must be >= 1")
        if self.a < 0 or self.b < 0:
            raise ValueError("hyperprior a, b must be nonnegative")


@dataclass
class ChainState:
    theta: np.ndarray
    sigma2: float
    loglik: float
    j: int = 1
    cov: np.ndarray | None = None
    s2: float = 1.0
    accept_count: int = 0
    chol: np.ndarray | None = None

    @property
    def norm2(self) -> float:
        return float(self.theta @ self.theta)


@dataclass
class ChainOutput:
    samples: np.ndarray
    sigma2_samples: np.ndarray
    log_cond_post: np.ndarray
    theta_norm2: np.ndarray
    sigma2: np.ndarray
    accepted: np.ndarray
    loglik: np.ndarray
    burn_in: int
    best_theta: np.ndarray
    best_loglik: float
    sample_log_cond_post: np.ndarray
    final_s2: float = 1.0
    final_cov: np.ndarray | None = None

    @property
    def acceptance_rate(self) -> float:
        post = self.accepted[self.burn_in :]
        return float(post.mean()) if len(post) else float("nan")


def _check(ll: float, theta) -> float:
    ll = float(ll)
    if math.isnan(ll):
        raise ChainError(f"log-likelihood returned NaN at theta with norm {np.linalg.norm(theta):.4g}")
    return ll


def log_accept_ratio(ll_new, ll_old, norm2_new, norm2_old, sigma2) -> float:
    """log alpha for block 1, clipped at 0.

    When both log-likelihoods are -inf the likelihood ratio is taken as 1.
    """
    if ll_new == -math.inf and ll_old == -math.inf:
        d = 0.0
    elif ll_new == -math.inf:
        return -math.inf
    elif ll_old == -math.inf:
        return 0.0
    else:
        d = ll_new - ll_old
    return min(d - (norm2_new - norm2_old) / (2.0 * sigma2), 0.0)


def log_cond_posterior(ll: float, norm2: float, sigma2: float, S: int) -> float:
    """loglik - ||theta||^2/(2 sigma2) - (S/2) log(2 pi sigma2)."""
    return ll - norm2 / (2.0 * sigma2) - 0.5 * S * math.log(2.0 * math.pi * sigma2)


def posterior_sigma2_params(theta, a: float, b: float) -> InvGammaParams:
    theta = np.asarray(theta, dtype=float)
    return InvGammaParams(a + theta.shape[0] / 2.0, b + float(theta @ theta) / 2.0)


def block2_step(theta, a: float, b: float, rng: RngHandle) -> float:
    return float(sample_inv_gamma(posterior_sigma2_params(theta, a, b), rng))


def _propose(state: ChainState, rng: RngHandle) -> np.ndarray:
    S = state.theta.shape[0]
    if state.chol is not None:
        return state.theta + state.chol @ rng.standard_normal(S)
    cov = state.s2 * (np.eye(S) if state.cov is None else state.cov)
    return sample_mvn(state.theta, cov, rng)


def block1_step(state: ChainState, loglik: LogLik, rng: RngHandle):
    """One random-walk MH move on theta given sigma2. Mutates and returns state."""
    prop = _propose(state, rng)
    ll_new = _check(loglik(prop), prop)
    log_alpha = log_accept_ratio(ll_new, state.loglik, float(prop @ prop), state.norm2, state.sigma2)
    accepted = math.log(rng.random()) < log_alpha
    if accepted:
        state.theta = prop
        state.loglik = ll_new
        state.accept_count += 1
    return state, accepted


def strided_indices(j: int, stride: int, window: int) -> np.ndarray:
    """1-based history indices used for the covariance at iteration j."""
    if j <= stride:
        return np.arange(1, j + 1)
    if j <= stride * window:
        n = j // stride
        start = j - n * stride
        idx = start + stride * np.arange(n)
    else:
        idx = j - stride * window + stride * np.arange(window)
    idx = idx[idx >= 1]
    if idx.size == 0 or idx[-1] != j:
        idx = np.append(idx, j)
    return idx


def adapt_covariance(history, stride: int, window: int, jitter: float, j: int) -> np.ndarray:
    """Empirical covariance of the strided subsample plus jitter * I.

    ``history[i-1]`` holds theta^(i). With fewer than two selected points the
    identity is returned, so the proposal falls back to s2 * I.
    """
    history = np.asarray(history, dtype=float)
    S = history.shape[1]
    idx = strided_indices(j, stride, window)
    if idx.size < 2:
        return np.eye(S)
    pts = history[idx - 1]
    c = np.cov(pts, rowvar=False, ddof=1).reshape(S, S)
    return c + jitter * np.eye(S)


def adapt_scale(s2: float, rate: float, j: int, kappa: float, target: float = 0.234) -> float:
    return s2 * math.exp(j ** (-kappa) * (rate - target))


def _set_proposal(state: ChainState):
    try:
        state.chol = np.linalg.cholesky(state.s2 * state.cov)
    except np.linalg.LinAlgError:
        state.chol = None


def run_two_block(config: ChainConfig, loglik: LogLik, rng: RngHandle, theta0=None, S: int | None = None,
                  progress: Callable[[int], None] | None = None) -> ChainOutput:
    """Run the sampler. Either ``theta0`` or the dimension ``S`` must be given.

    When ``theta0`` is omitted the start is drawn from N(0, sigma_init2 I).
    """
    c = config
    if theta0 is None:
        if S is None:
            raise ValueError("need theta0 or S")
        theta0 = math.sqrt(c.sigma_init2) * rng.standard_normal(S)
    theta = np.array(theta0, dtype=float)
    S = theta.shape[0]
    n = c.iterations

    state = ChainState(theta=theta, sigma2=block2_step(theta, c.a, c.b, rng),
                       loglik=_check(loglik(theta), theta), s2=c.s2_init)
    hist_len = c.burn_in + 1
    history = np.empty((hist_len, S))
    history[0] = theta
    recent = deque(maxlen=c.accept_window)

    lcp = np.empty(n)
    norm2 = np.empty(n)
    sig = np.empty(n)
    acc = np.zeros(n, dtype=bool)
    lls = np.empty(n)
    n_keep = len(range(c.burn_in, n, c.thin))
    samples = np.empty((n_keep, S))
    sig_samples = np.empty(n_keep)
    samp_lcp = np.empty(n_keep)
    best_theta, best_ll = theta.copy(), state.loglik
    keep = 0

    for j in range(1, n + 1):
        state.j = j
        if j <= c.burn_in:
            state.cov = adapt_covariance(history[:j], c.stride, c.window, c.jitter, j)
            _set_proposal(state)
        state, accepted = block1_step(state, loglik, rng)
        state.sigma2 = block2_step(state.theta, c.a, c.b, rng)

        i = j - 1
        acc[i] = accepted
        lls[i] = state.loglik
        norm2[i] = state.norm2
        sig[i] = state.sigma2
        lcp[i] = log_cond_posterior(state.loglik, norm2[i], state.sigma2, S)
        if state.loglik > best_ll:
            best_ll, best_theta = state.loglik, state.theta.copy()

        if j <= c.burn_in:
            history[j] = state.theta
            recent.append(accepted)
            state.s2 = adapt_scale(state.s2, sum(recent) / len(recent), j, c.kappa, c.target_accept)
        elif (i - c.burn_in) % c.thin == 0:
            samples[keep] = state.theta
            sig_samples[keep] = state.sigma2
            samp_lcp[keep] = lcp[i]
            keep += 1
        if j == c.burn_in:
            # freeze the proposal at the adapted scale and covariance
            _set_proposal(state)
        if progress is not None and j % 10_000 == 0:
            progress(j)

    return ChainOutput(samples=samples, sigma2_samples=sig_samples, log_cond_post=lcp,
                       theta_norm2=norm2, sigma2=sig, accepted=acc, loglik=lls, burn_in=c.burn_in,
                       best_theta=best_theta, best_loglik=best_ll, sample_log_cond_post=samp_lcp,
                       final_s2=state.s2, final_cov=state.cov)


def map_estimate(output: ChainOutput) -> np.ndarray:
    """Post-burn-in sample with the largest log conditional posterior (earliest on ties)."""
    if len(output.samples) == 0:
        raise ChainError("chain has no post-burn-in samples")
    return output.samples[int(np.argmax(output.sample_log_cond_post))].copy()


def joint_log_target(ll: float, norm2: float, sigma2: float, S: int, a: float, b: float) -> float:
    """log of likelihood x N(theta; 0, sigma2 I) x Inv-Gamma(sigma2; a, b), up to constants."""
    return (ll - 0.5 * S * math.log(2.0 * math.pi * sigma2) - norm2 / (2.0 * sigma2)
            - (a + 1.0) * math.log(sigma2) - b / sigma2)


def joint_log_accept_ratio(ll_new, ll_old, norm2_new, norm2_old, s2_new, s2_old, S, a, b, a_q, b_q) -> float:
    """log alpha for the joint (theta, sigma2) move with an inverse-gamma sigma2 proposal."""
    if ll_new == -math.inf and ll_old != -math.inf:
        return -math.inf
    if ll_old == -math.inf and ll_new != -math.inf:
        return 0.0
    if ll_new == -math.inf:
        ll_new = ll_old = 0.0
    def log_q(x):
        return -(a_q + 1.0) * math.log(x) - b_q / x
    num = joint_log_target(ll_new, norm2_new, s2_new, S, a, b) + log_q(s2_old)
    den = joint_log_target(ll_old, norm2_old, s2_old, S, a, b) + log_q(s2_new)
    return min(num - den, 0.0)


def joint_mh_step(state: ChainState, loglik: LogLik, a_q: float, b_q: float, rng: RngHandle,
                  a: float = 1e-6, b: float = 1e-6) -> tuple[ChainState, bool]:
    """Propose (theta*, sigma2*) jointly and accept or reject both together.

    theta* is a random-walk move; sigma2* is an independent Inv-Gamma(a_q, b_q)
    draw, so the Hastings ratio carries the proposal densities.
    """
    S = state.theta.shape[0]
    prop = _propose(state, rng)
    s2_new = float(sample_inv_gamma(InvGammaParams(a_q, b_q), rng))
    ll_new = _check(loglik(prop), prop)
    log_alpha = joint_log_accept_ratio(ll_new, state.loglik, float(prop @ prop), state.norm2,
                                       s2_new, state.sigma2, S, a, b, a_q, b_q)
    accepted = math.log(rng.random()) < log_alpha
    if accepted:
        state.theta, state.loglik, state.sigma2 = prop, ll_new, s2_new
        state.accept_count += 1
    return state, accepted


def marginal_prior_logpdf(theta, a: float, b: float) -> float:
    """log of the integral over sigma2 of N(theta; 0, sigma2 I) Inv-Gamma(sigma2; a, b).

    Equals a multivariate Student-t with 2a degrees of freedom and scale (b/a) I.
    """
    theta = np.asarray(theta, dtype=float)
    S = theta.shape[0]
    return (math.lgamma(a + S / 2.0) - math.lgamma(a) - 0.5 * S * math.log(2.0 * math.pi)
            + a * math.log(b) - (a + S / 2.0) * math.log(b + float(theta @ theta) / 2.0))
