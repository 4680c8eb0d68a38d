"""Genetic algorithm, random search and the two sampler hybrids.

Every optimizer maximizes a callback ``objective(theta) -> float``. NaN
objective values are treated as -inf.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mcmc import block2_step, log_cond_posterior
from .nn import NetworkShape, cross_entropy_l2, grad_cross_entropy_l2
from .rng import RngHandle

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]


@dataclass
class GAConfig:
    population: int = 100
    generations: int = 1000
    alpha: float = 0.5
    mutation_rate: float = 0.1
    mutation_sigma2: float = 0.01
    lo: float | np.ndarray = -5.0
    hi: float | np.ndarray = 5.0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if np.any(np.asarray(self.lo) >= np.asarray(self.hi)):
            raise ValueError("need lo < hi")


def _safe_eval(objective: Objective, theta) -> float:
    v = float(objective(theta))
    if math.isnan(v):
        log.warning("objective returned NaN; treating it as -inf")
        return -math.inf
    return v


def evaluate(objective: Objective, pop) -> np.ndarray:
    return np.array([_safe_eval(objective, th) for th in pop])


def roulette_select(fitness, rng: RngHandle, n: int | None = None) -> np.ndarray:
    """Fitness-proportional draws (0-based indices).

    Negative fitness is shifted by its minimum plus 1e-12. Non-finite fitness
    gets zero weight; if no weight remains the draw is uniform.
    """
    f = np.asarray(fitness, dtype=float)
    N = f.shape[0]
    n = N if n is None else n
    w = np.where(np.isfinite(f), f, np.nan)
    finite = ~np.isnan(w)
    if finite.any():
        lo = np.nanmin(w)
        if lo < 0:
            w = w - lo + 1e-12
    w = np.where(finite, w, 0.0)
    total = w.sum()
    if not total > 0:
        return rng.integers(0, N, size=n)
    C = np.cumsum(w / total)
    r = rng.random(n)
    return np.minimum(np.searchsorted(C, r, side="left"), N - 1)


def blend_crossover(p1, p2, alpha: float, rng: RngHandle, u=None) -> np.ndarray:
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError("parents differ in length")
    if u is None:
        u = rng.random(p1.shape)
    v = (1.0 + 2.0 * alpha) * u - alpha
    return v * p1 + (1.0 - v) * p2


def gaussian_mutate(pop, rate: float, sigma2: float, rng: RngHandle) -> np.ndarray:
    pop = np.array(pop, dtype=float)
    chosen = rng.random(pop.shape[0]) < rate
    if chosen.any():
        pop[chosen] += math.sqrt(sigma2) * rng.standard_normal((int(chosen.sum()),) + pop.shape[1:])
    return pop


def elitist_replace(pop, offspring, fitness_2n):
    """Keep the N fittest of ``[pop; offspring]``; ties go to the lower index.

    Returns (next_pop, their fitness, chosen indices into the 2N stack).
    """
    both = np.concatenate([np.asarray(pop, dtype=float), np.asarray(offspring, dtype=float)])
    f = np.asarray(fitness_2n, dtype=float)
    N = len(pop)
    order = np.argsort(-f, kind="stable")[:N]
    return both[order], f[order], order


def _make_offspring(pop, fitness, cfg: GAConfig, rng: RngHandle):
    N = pop.shape[0]
    pool = pop[roulette_select(fitness, rng, N)]
    i = rng.integers(0, N, size=N)
    j = rng.integers(0, N, size=N)
    kids = blend_crossover(pool[i], pool[j], cfg.alpha, rng)
    return gaussian_mutate(kids, cfg.mutation_rate, cfg.mutation_sigma2, rng)


def _init_pop(cfg: GAConfig, S: int, rng: RngHandle, init_pop=None) -> np.ndarray:
    if init_pop is not None:
        pop = np.array(init_pop, dtype=float)
        if pop.ndim == 1:
            pop = np.tile(pop, (cfg.population, 1))
        return pop
    lo = np.broadcast_to(np.asarray(cfg.lo, dtype=float), (S,))
    hi = np.broadcast_to(np.asarray(cfg.hi, dtype=float), (S,))
    return lo + (hi - lo) * rng.random((cfg.population, S))


@dataclass
class GAResult:
    best_theta: np.ndarray
    best_value: float
    trace: list = field(default_factory=list)

    TRACE_COLUMNS = ("generation", "best_fitness", "best_objective", "mean_fitness", "best_theta_norm2")


def _trace_row(m, fit, best_value, best_theta):
    ok = fit[np.isfinite(fit)]
    return {
        "generation": m,
        "best_fitness": float(np.max(fit)),
        "best_objective": float(best_value),
        "mean_fitness": float(ok.mean()) if ok.size else -math.inf,
        "best_theta_norm2": float(best_theta @ best_theta),
    }


def ga_run(config: GAConfig, objective: Objective, rng: RngHandle, S: int | None = None,
           init_pop=None, progress: Callable[[int], None] | None = None) -> GAResult:
    """Elitist real-coded GA. Generation 1 is the initial population."""
    if S is None and init_pop is None:
        raise ValueError("need S or init_pop")
    pop = _init_pop(config, S if S is not None else np.shape(init_pop)[-1], rng, init_pop)
    fit = evaluate(objective, pop)
    b = int(np.argmax(fit))
    best_theta, best_value = pop[b].copy(), fit[b]
    trace = [_trace_row(1, fit, best_value, best_theta)]
    for m in range(2, config.generations + 1):
        kids = _make_offspring(pop, fit, config, rng)
        kfit = evaluate(objective, kids)
        kb = int(np.argmax(kfit))
        if kfit[kb] > best_value:
            best_theta, best_value = kids[kb].copy(), kfit[kb]
        pop, fit, _ = elitist_replace(pop, kids, np.concatenate([fit, kfit]))
        trace.append(_trace_row(m, fit, best_value, best_theta))
        if progress is not None:
            progress(m)
    return GAResult(best_theta, float(best_value), trace)


def random_search(config: GAConfig, objective: Objective, rng: RngHandle, S: int,
                  n_draws: int | None = None) -> GAResult:
    """Best of M*N uniform draws over the box (earliest draw on ties)."""
    n = config.population * config.generations if n_draws is None else n_draws
    lo = np.broadcast_to(np.asarray(config.lo, dtype=float), (S,))
    hi = np.broadcast_to(np.asarray(config.hi, dtype=float), (S,))
    best_theta, best_value = None, -math.inf
    done = 0
    while done < n:
        chunk = min(4096, n - done)
        draws = lo + (hi - lo) * rng.random((chunk, S))
        vals = evaluate(objective, draws)
        b = int(np.argmax(vals))
        if best_theta is None or vals[b] > best_value:
            best_theta, best_value = draws[b].copy(), vals[b]
        done += chunk
    return GAResult(best_theta, float(best_value), [])


@dataclass
class HybridResult:
    best_theta: np.ndarray
    best_fitness: float
    best_loglik: float
    thetas: np.ndarray        # (M, N, S) population after each generation
    sigma2: np.ndarray        # (M, N) dispersion draws after each generation
    fitness: np.ndarray       # (M, N)
    loglik: np.ndarray        # (M, N)
    trace: list = field(default_factory=list)


def ga_hybrid_run(config: GAConfig, loglik: Objective, a: float, b: float, rng: RngHandle,
                  S: int | None = None, init_pop=None,
                  progress: Callable[[int], None] | None = None) -> HybridResult:
    """GA whose fitness is the log conditional posterior of (theta, sigma2).

    Each individual carries its own sigma2. Offspring get a fresh draw from
    the inverse-gamma conditional before they are scored; after elitist
    replacement every survivor's sigma2 is redrawn and its fitness refreshed.
    """
    if S is None and init_pop is None:
        raise ValueError("need S or init_pop")
    pop = _init_pop(config, S if S is not None else np.shape(init_pop)[-1], rng, init_pop)
    N, S = pop.shape
    M = config.generations

    def draw_sigma2(P):
        return np.array([block2_step(th, a, b, rng) for th in P])

    def fitness(ll, P, s2):
        n2 = np.einsum("ij,ij->i", P, P)
        return np.array([log_cond_posterior(l, q, s, S) for l, q, s in zip(ll, n2, s2)])

    ll = evaluate(loglik, pop)
    s2 = draw_sigma2(pop)
    fit = fitness(ll, pop, s2)

    thetas = np.empty((M, N, S))
    sig = np.empty((M, N))
    fits = np.empty((M, N))
    lls = np.empty((M, N))
    best = [-math.inf, None, -math.inf]
    trace = []

    def record(m):
        thetas[m - 1], sig[m - 1], fits[m - 1], lls[m - 1] = pop, s2, fit, ll
        i = int(np.argmax(fit))
        if fit[i] > best[0]:
            best[0], best[1], best[2] = fit[i], pop[i].copy(), ll[i]
        trace.append(_trace_row(m, fit, best[0], best[1]))

    record(1)
    for m in range(2, M + 1):
        kids = _make_offspring(pop, fit, config, rng)
        kll = evaluate(loglik, kids)
        ks2 = draw_sigma2(kids)
        kfit = fitness(kll, kids, ks2)
        pop, fit, order = elitist_replace(pop, kids, np.concatenate([fit, kfit]))
        ll = np.concatenate([ll, kll])[order]
        s2 = draw_sigma2(pop)
        fit = fitness(ll, pop, s2)
        record(m)
        if progress is not None:
            progress(m)
    return HybridResult(best[1], float(best[0]), float(best[2]), thetas, sig, fits, lls, trace)


class DivergenceError(RuntimeError):
    pass


@dataclass
class GDResult:
    theta: np.ndarray
    theta_trace: np.ndarray
    sigma2_trace: np.ndarray
    loss_trace: np.ndarray


def gd_hybrid_run(shape: NetworkShape, X, Y, steps: int, h: float, a: float, b: float, rng: RngHandle,
                  theta0=None, sigma_init2: float = 1.0, resample: bool = True,
                  sigma2_0: float | None = None) -> GDResult:
    """Alternate a gradient step on cross-entropy + ||theta||^2/(2 sigma2) with a sigma2 redraw."""
    S = shape.n_params
    theta = (math.sqrt(sigma_init2) * rng.standard_normal(S) if theta0 is None
             else np.array(theta0, dtype=float))
    s2 = block2_step(theta, a, b, rng) if sigma2_0 is None else float(sigma2_0)
    th_tr = np.empty((steps + 1, S))
    s2_tr = np.empty(steps + 1)
    loss_tr = np.empty(steps + 1)
    th_tr[0], s2_tr[0] = theta, s2
    loss_tr[0] = cross_entropy_l2(theta, shape, X, Y, s2)
    for m in range(1, steps + 1):
        theta = theta - h * grad_cross_entropy_l2(theta, shape, X, Y, s2)
        loss = cross_entropy_l2(theta, shape, X, Y, s2)
        if not loss <= 1e10:
            raise DivergenceError(f"loss {loss:.4g} at step {m}; reduce the step size")
        if resample:
            s2 = block2_step(theta, a, b, rng)
        th_tr[m], s2_tr[m], loss_tr[m] = theta, s2, loss
    return GDResult(theta, th_tr, s2_tr, loss_tr)
