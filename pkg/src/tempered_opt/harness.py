"""Config-driven experiment runner.

A run is fully described by one INI file. Every key has a default; the
defaults actually used are echoed to ``effective_config.ini`` next to the
results so the run can be repeated from that file alone.

Sweep cells (one per value of the swept axis) are independent and may run in
worker processes; all file writes happen in the parent, in cell order, so
outputs are byte-identical regardless of ``workers``.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics
from .data import ParticleDataset, generate_particle_data
from .envs import blackjack as bj
from .envs import navigation as nav
from .envs import tictactoe as ttt
from .likelihoods import FAMILIES, LikelihoodSpec, log_pseudo_likelihood
from .mcmc import ChainConfig, map_estimate, run_two_block
from .nn import LOG_FLOOR, Network, NetworkShape
from .optimizers import GAConfig, GAResult, ga_hybrid_run, ga_run, gd_hybrid_run, random_search
from .rng import seeded_rng

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "TEMPERED_OPT_OUTPUT_ROOT"

KINDS = (
    "nav-ga", "nav-rs", "nav-mcmc",
    "ttt-ga", "ttt-rs", "ttt-mcmc", "ttt-random",
    "bj1", "bj2", "bj3", "bj-policies", "bj-bets",
    "classify-mcmc", "classify-gd", "classify-ga",
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _floats(s: str) -> list:
    return [float(x) for x in s.replace(";", ",").split(",") if x.strip()]


def _strs(s: str) -> list:
    return [x.strip() for x in s.split(",") if x.strip()]


# section -> key -> (parser, default text)
SCHEMA = {
    "experiment": {
        "kind": (str, ""),
        "output_dir": (str, "results"),
        "train_seed": (int, "2024"),
        "test_seed_start": (int, "1"),
        "test_count": (int, "1000"),
        "workers": (int, "1"),
        "scale": (float, "1"),
    },
    "sweep": {
        "nu": (_floats, "0"),
        "beta": (_floats, ""),
        "sigma_init2": (_floats, ""),
        "family": (_strs, ""),
    },
    "likelihood": {
        "family": (str, "binomial"),
        "beta": (float, "1"),
    },
    "sampler": {
        "iterations": (int, "100000"),
        "burn_in": (int, "20000"),
        "stride": (int, "1000"),
        "window": (int, "100"),
        "jitter": (float, "1e-06"),
        "kappa": (float, "0.6"),
        "a": (float, "1e-06"),
        "b": (float, "1e-06"),
        "s2_init": (float, "1"),
        "sigma_init2": (float, "1"),
        "target_accept": (float, "0.234"),
        "accept_window": (int, "500"),
        # navigation runs with the smoother beta and exponential likelihoods mix slower
        "burn_in_nav_smooth": (int, "60000"),
    },
    "ga": {
        "population": (int, "100"),
        "generations": (int, "1000"),
        "alpha": (float, "0.5"),
        "mutation_rate": (float, "0.1"),
        "mutation_sigma2": (float, "0.01"),
        "lo": (float, "-5"),
        "hi": (float, "5"),
        "rs_draws": (int, "0"),
    },
    "nav": {
        "R_inner": (float, "0.25"),
        "R_outer": (float, "1"),
        "R_crash": (float, "0.05"),
        "K": (int, "250"),
        "J": (int, "50"),
        "T": (int, "100"),
        "delta": (float, "0.01"),
        "P_lower": (float, "0"),
        "P_upper": (float, "0"),
        "sf": (float, "1"),
        "variant": (str, "I"),
    },
    "ttt": {
        "variant": (str, "II"),
        "train_games": (int, "100"),
    },
    "bj": {
        "hands": (int, "1000"),
        "decks": (int, "8"),
        "penetration": (float, "0.5"),
        "method": (str, "ga"),
        "bet_variant": (str, "II"),
        "policies": (_strs, ",".join(bj.BASELINE_POLICIES)),
        "thresholds": (_floats, "0,1,2,3"),
    },
    "classify": {
        "data_seed": (int, "2024"),
        "data_path": (str, ""),
        "per_class": (int, "120"),
        "noise": (float, "1.2"),
        "radius": (float, "2"),
        "hidden_nodes": (int, "3"),
        "gd_steps": (int, "10000"),
        "gd_h": (float, "0.01"),
    },
}

# sections each kind reads, and kind-specific defaults that override SCHEMA
_KIND_SECTIONS = {
    "nav-ga": ("sweep", "ga", "nav"),
    "nav-rs": ("sweep", "ga", "nav"),
    "nav-mcmc": ("sweep", "likelihood", "sampler", "nav"),
    "ttt-ga": ("sweep", "ga", "ttt"),
    "ttt-rs": ("sweep", "ga", "ttt"),
    "ttt-mcmc": ("sweep", "likelihood", "sampler", "ttt"),
    "ttt-random": ("ttt",),
    "bj1": ("sweep", "likelihood", "sampler", "ga", "bj"),
    "bj2": ("sweep", "likelihood", "sampler", "ga", "bj"),
    "bj3": ("sweep", "likelihood", "sampler", "ga", "bj"),
    "bj-policies": ("bj",),
    "bj-bets": ("bj",),
    "classify-mcmc": ("sampler", "classify"),
    "classify-gd": ("sampler", "classify"),
    "classify-ga": ("sampler", "ga", "classify"),
}
_KIND_DEFAULTS = {
    "nav-mcmc": {("likelihood", "beta"): "20"},
    "ttt-ga": {("experiment", "test_count"): "10000"},
    "ttt-rs": {("experiment", "test_count"): "10000"},
    "ttt-mcmc": {("experiment", "test_count"): "10000", ("likelihood", "family"): "exponential",
                 ("likelihood", "beta"): "100"},
    "ttt-random": {("experiment", "test_count"): "100000"},
    "bj1": {("experiment", "test_count"): "10000", ("likelihood", "family"): "exponential",
            ("likelihood", "beta"): "50"},
    "bj2": {("experiment", "test_count"): "10000", ("likelihood", "family"): "exponential",
            ("likelihood", "beta"): "250"},
    "bj3": {("experiment", "test_count"): "10000", ("likelihood", "family"): "exponential",
            ("likelihood", "beta"): "50"},
    "bj-policies": {("experiment", "test_count"): "10000"},
    "bj-bets": {("experiment", "test_count"): "10000"},
    "classify-mcmc": {("sampler", "iterations"): "150000", ("sampler", "burn_in"): "30000"},
    "classify-ga": {("ga", "generations"): "300"},
}
# keys divided by --scale
_SCALED = {
    ("experiment", "test_count"), ("sampler", "iterations"), ("sampler", "burn_in"),
    ("sampler", "burn_in_nav_smooth"),
    ("ga", "generations"), ("ga", "rs_draws"), ("classify", "gd_steps"),
}


@dataclass
class ExperimentConfig:
    kind: str
    values: dict                     # section -> key -> parsed value
    text: dict                       # section -> key -> effective text
    scaled_by: float = 1.0
    source: str = ""

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def sweep_axis(self):
        """(axis name, values) of the swept parameter; a single cell if nothing is swept."""
        sw = self.values.get("sweep")
        if not sw:
            return None, [None]
        given = [k for k in ("beta", "sigma_init2", "family") if sw[k]]
        if len(given) > 1:
            raise ConfigError(f"[sweep] {given[1]}: only one of beta / sigma_init2 / family may be swept")
        if given:
            return given[0], list(sw[given[0]])
        return "nu", list(sw["nu"]) or [0.0]


def _scale_value(v: int, f: float) -> int:
    return max(1, int(math.ceil(v / f))) if v > 0 else v


def load_config(path, scale: float | None = None) -> ExperimentConfig:
    """Parse and validate a config file; ``scale`` overrides ``[experiment] scale``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    return build_config(cp, source=str(path), scale=scale)


def config_from_dict(d: dict, scale: float | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_dict({s: {k: str(v) for k, v in kv.items()} for s, kv in d.items()})
    return build_config(cp, scale=scale)


def build_config(cp: configparser.ConfigParser, source: str = "", scale: float | None = None) -> ExperimentConfig:
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"[{sec}]: unknown section")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"[{sec}] {key}: unknown key")
    kind = cp.get("experiment", "kind", fallback="").strip()
    if kind not in KINDS:
        raise ConfigError(f"[experiment] kind: {kind!r} is not one of {', '.join(KINDS)}")
    sections = ("experiment",) + _KIND_SECTIONS[kind]
    for sec in cp.sections():
        if sec not in sections:
            raise ConfigError(f"[{sec}]: section not used by kind {kind}")

    text, values = {}, {}
    overrides = _KIND_DEFAULTS.get(kind, {})
    for sec in sections:
        text[sec], values[sec] = {}, {}
        for key, (parse, default) in SCHEMA[sec].items():
            raw = cp.get(sec, key, fallback=None)
            if raw is None:
                raw = overrides.get((sec, key), default)
            raw = raw.strip()
            try:
                val = parse(raw)
            except ValueError:
                raise ConfigError(f"[{sec}] {key}: cannot parse {raw!r} as {parse.__name__.lstrip('_')}") from None
            text[sec][key], values[sec][key] = raw, val

    f = values["experiment"]["scale"] if scale is None else float(scale)
    if not f > 0:
        raise ConfigError("[experiment] scale: must be positive")
    if f != 1:
        for sec, key in _SCALED:
            if sec in values:
                values[sec][key] = _scale_value(values[sec][key], f)
                text[sec][key] = str(values[sec][key])
    values["experiment"]["scale"] = 1.0
    text["experiment"]["scale"] = "1"

    cfg = ExperimentConfig(kind, values, text, f, source)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["experiment"]["workers"] < 1:
        raise ConfigError("[experiment] workers: must be >= 1")
    if v["experiment"]["test_count"] < 1:
        raise ConfigError("[experiment] test_count: must be >= 1")
    if "likelihood" in v and v["likelihood"]["family"] not in FAMILIES:
        raise ConfigError(f"[likelihood] family: must be one of {FAMILIES}")
    if "sweep" in v:
        for fam in v["sweep"]["family"]:
            if fam not in FAMILIES:
                raise ConfigError(f"[sweep] family: {fam!r} is not one of {FAMILIES}")
        cfg.sweep_axis  # raises on conflicting axes
    if "sampler" in v:
        s = v["sampler"]
        if not 0 <= s["burn_in"] < s["iterations"]:
            raise ConfigError("[sampler] burn_in: must satisfy 0 <= burn_in < iterations")
        if cfg.kind == "nav-mcmc":
            fams = v["sweep"]["family"] or [v["likelihood"]["family"]]
            if any(f in ("beta", "exponential") for f in fams) and not 0 <= s["burn_in_nav_smooth"] < s["iterations"]:
                raise ConfigError("[sampler] burn_in_nav_smooth: must satisfy 0 <= burn_in_nav_smooth < iterations "
                                  "for beta or exponential navigation runs")
        try:
            _chain_config(cfg)
        except ValueError as e:
            raise ConfigError(f"[sampler] {e}") from None
    if "ga" in v:
        try:
            _ga_config(cfg)
        except ValueError as e:
            raise ConfigError(f"[ga] {e}") from None
    if "nav" in v:
        if v["nav"]["variant"] not in ("I", "II"):
            raise ConfigError("[nav] variant: must be I or II")
        try:
            _nav_params(cfg)
        except ValueError as e:
            raise ConfigError(f"[nav] {e}") from None
    if "ttt" in v and v["ttt"]["variant"] not in ("I", "II"):
        raise ConfigError("[ttt] variant: must be I or II")
    if "bj" in v:
        b = v["bj"]
        if b["method"] not in ("ga", "mcmc", "hybrid"):
            raise ConfigError("[bj] method: must be ga, mcmc or hybrid")
        if b["bet_variant"] not in ("I", "II"):
            raise ConfigError("[bj] bet_variant: must be I or II")
        for p in b["policies"]:
            if p not in bj.BASELINE_POLICIES:
                raise ConfigError(f"[bj] policies: unknown policy {p!r}")
        if b["hands"] < 1:
            raise ConfigError("[bj] hands: must be >= 1")


def effective_config_text(cfg: ExperimentConfig) -> str:
    lines = [f"# effective configuration for kind {cfg.kind}"]
    if cfg.scaled_by != 1:
        lines.append(f"# counts already divided by scale factor {cfg.scaled_by:g}")
    for sec, kv in cfg.text.items():
        lines.append("")
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in kv.items())
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ builders


def _chain_config(cfg: ExperimentConfig, **over) -> ChainConfig:
    s = dict(cfg["sampler"])
    s.update(over)
    return ChainConfig(iterations=s["iterations"], burn_in=s["burn_in"], sigma_init2=s["sigma_init2"],
                       stride=s["stride"], window=s["window"], jitter=s["jitter"], kappa=s["kappa"],
                       a=s["a"], b=s["b"], s2_init=s["s2_init"], target_accept=s["target_accept"],
                       accept_window=s["accept_window"])


def _ga_config(cfg: ExperimentConfig) -> GAConfig:
    g = cfg["ga"]
    return GAConfig(population=g["population"], generations=g["generations"], alpha=g["alpha"],
                    mutation_rate=g["mutation_rate"], mutation_sigma2=g["mutation_sigma2"], lo=g["lo"], hi=g["hi"])


def _nav_params(cfg: ExperimentConfig) -> nav.NavParams:
    n = cfg["nav"]
    return nav.NavParams(R_inner=n["R_inner"], R_outer=n["R_outer"], R_crash=n["R_crash"], K=n["K"], J=n["J"],
                         T=n["T"], delta=n["delta"], P_lower=n["P_lower"] or None, P_upper=n["P_upper"] or None,
                         sf=n["sf"])


def _bj_rules(cfg: ExperimentConfig) -> bj.Rules:
    return bj.Rules(decks=cfg["bj"]["decks"], penetration=cfg["bj"]["penetration"])


def initial_theta(seed: int, S: int, sigma_init2: float) -> np.ndarray:
    """Shared starting point theta^(1) ~ N(0, sigma_init2 I) for every method of a run."""
    return math.sqrt(sigma_init2) * seeded_rng(seed, 0).standard_normal(S)


def _test_seeds(cfg: ExperimentConfig) -> list:
    e = cfg["experiment"]
    return list(range(e["test_seed_start"], e["test_seed_start"] + e["test_count"]))


def _l2(nu: float):
    return lambda th: nu * float(th @ th)


# ------------------------------------------------------------------ cell results


@dataclass
class CellResult:
    row: dict
    traces: dict = field(default_factory=dict)      # file stem -> (columns, rows)
    summaries: dict = field(default_factory=dict)   # file stem -> json-able dict


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows) -> None:
    """CSV with ``,`` delimiter, ``.`` decimal point and LF line endings."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            vals = [r[c] for c in columns] if isinstance(r, dict) else r
            w.writerow([_fmt(v) for v in vals])


def _chain_traces(tag: str, out) -> dict:
    n = len(out.log_cond_post)
    rows = zip(range(1, n + 1), out.log_cond_post, out.theta_norm2, out.sigma2, out.accepted, out.loglik)
    return {f"chain_{tag}": (("iteration", "log_cond_post", "theta_norm2", "sigma2", "accepted", "loglik"),
                             list(rows))}


def _sigma2_histogram(sigma2, bins: int = 50) -> dict:
    counts, edges = np.histogram(np.asarray(sigma2), bins=bins)
    return {"bin_left": edges[:-1].tolist(), "bin_right": edges[1:].tolist(), "count": counts.tolist()}


def _chain_summary(out, shape_params: int) -> tuple:
    summ = diagnostics.summarize_chain(out.samples, out.sigma2_samples, out.theta_norm2)
    d = {
        "ess": summ.ess, "ess_fallback": summ.ess_fallback, "ess_per_dim": summ.ess_per_dim,
        "invgamma_shape": summ.invgamma_shape, "invgamma_rate": summ.invgamma_rate,
        "trend_tau": summ.trend_tau, "acceptance_rate": out.acceptance_rate,
        "max_log_cond_post": float(np.max(out.sample_log_cond_post)),
        "best_loglik": out.best_loglik, "final_s2": out.final_s2, "burn_in": out.burn_in,
        "n_params": shape_params, "sigma2_histogram": _sigma2_histogram(out.sigma2_samples),
    }
    return summ, d


def _ga_trace(tag: str, res) -> dict:
    return {f"ga_{tag}": (GAResult.TRACE_COLUMNS, res.trace)} if res.trace else {}


def _tag(axis, value, index) -> str:
    return f"{index:02d}" if axis is None else f"{index:02d}_{axis}_{value}"


def _run_optimizer(cfg, method, S, objective, loglik, seed, index, tag, s2_over=None, burn_in=None):
    """Returns (theta, extra row fields, traces, summaries)."""
    if method == "ga":
        res = ga_run(_ga_config(cfg), objective, seeded_rng(seed, 1, index), S=S)
        return res.best_theta, {"fitness": res.best_value}, _ga_trace(tag, res), {}
    if method == "rs":
        g = cfg["ga"]
        res = random_search(_ga_config(cfg), objective, seeded_rng(seed, 1, index), S, g["rs_draws"] or None)
        return res.best_theta, {"fitness": res.best_value}, {}, {}
    s2i = cfg["sampler"]["sigma_init2"] if s2_over is None else s2_over
    theta1 = initial_theta(seed, S, s2i)
    if method == "mcmc":
        over = {"sigma_init2": s2i} if burn_in is None else {"sigma_init2": s2i, "burn_in": burn_in}
        out = run_two_block(_chain_config(cfg, **over), loglik, seeded_rng(seed, 1, index), theta0=theta1)
        summ, d = _chain_summary(out, S)
        extra = {"max_log_cond_post": d["max_log_cond_post"], "ess": summ.ess, "ig_shape": summ.invgamma_shape,
                 "ig_rate": summ.invgamma_rate, "acceptance": out.acceptance_rate}
        return map_estimate(out), extra, _chain_traces(tag, out), {f"chain_{tag}": d}
    if method == "hybrid":
        s = cfg["sampler"]
        res = ga_hybrid_run(_ga_config(cfg), loglik, s["a"], s["b"], seeded_rng(seed, 2, index), init_pop=theta1)
        return res.best_theta, {"fitness": res.best_fitness}, _ga_trace(tag, res), {}
    raise ConfigError(f"unknown method {method!r}")


# ------------------------------------------------------------------ navigation


def _nav_burn_in(cfg: ExperimentConfig, family: str) -> int:
    s = cfg["sampler"]
    return s["burn_in_nav_smooth"] if family in ("beta", "exponential") else s["burn_in"]


def _cell_nav(cfg: ExperimentConfig, axis, value, index) -> CellResult:
    p = _nav_params(cfg)
    variant = cfg["nav"]["variant"]
    seed = cfg["experiment"]["train_seed"]
    S = nav.n_params()
    method = {"nav-ga": "ga", "nav-rs": "rs", "nav-mcmc": "mcmc"}[cfg.kind]
    nu = value if axis == "nu" else 0.0
    lik = dict(cfg["likelihood"]) if "likelihood" in cfg.values else {}
    if axis == "family":
        lik["family"] = value
    if axis == "beta":
        lik["beta"] = value

    def k_of(th):
        return nav.run_episode(th, seed, p, variant).k_successes

    objective = lambda th: k_of(th) / p.T - nu * float(th @ th)
    loglik = burn_in = None
    if method == "mcmc":
        spec = LikelihoodSpec(lik["family"], lik["beta"], p.T)
        loglik = lambda th: log_pseudo_likelihood(spec, k_of(th) / p.T if spec.family == "exponential" else k_of(th))
        burn_in = _nav_burn_in(cfg, spec.family)
    theta, extra, traces, summ = _run_optimizer(cfg, method, S, objective, loglik, seed, index,
                                                _tag(axis, value, index), s2_over=value if axis == "sigma_init2" else None,
                                                burn_in=burn_in)
    if burn_in is not None:
        extra["burn_in"] = burn_in
    ks = np.array([nav.run_episode(theta, s, p, variant).k_successes for s in _test_seeds(cfg)])
    row = {axis or "cell": value if axis else index, "k_in": k_of(theta), "median_k_out": float(np.median(ks)),
           "mean_k_out": float(ks.mean()), "R_detection": nav.phi_logistic(theta[0], p.sf), **extra,
           "theta_norm2": float(theta @ theta)}
    tag = _tag(axis, value, index)
    traces[f"test_{tag}"] = (("seed", "k"), list(zip(_test_seeds(cfg), ks.tolist())))
    summ[f"theta_{tag}"] = {"kind": cfg.kind, "variant": variant, "theta": theta.tolist()}
    return CellResult(row, traces, summ)


# ------------------------------------------------------------------ tic-tac-toe


def _ttt_train_seeds(cfg) -> list:
    seed = cfg["experiment"]["train_seed"]
    return [(seed, i) for i in range(cfg["ttt"]["train_games"])]


def ttt_test_set(cfg, player, train_log) -> tuple:
    """Distinct-opponent test seeds; a partial set if the player cannot reach the target count."""
    e = cfg["experiment"]
    try:
        return ttt.build_test_set(train_log, e["test_count"], player, e["test_seed_start"], cfg["ttt"]["variant"]), False
    except ttt.TestSetExhausted as ex:
        log.warning("tic-tac-toe test set: %s; using the %d distinct games found", ex, len(ex.seeds))
        return ex.seeds, True


def _cell_ttt(cfg: ExperimentConfig, axis, value, index) -> CellResult:
    variant = cfg["ttt"]["variant"]
    seed = cfg["experiment"]["train_seed"]
    S = ttt.player_shape(variant).n_params
    train = _ttt_train_seeds(cfg)
    K = len(train)
    method = {"ttt-ga": "ga", "ttt-rs": "rs", "ttt-mcmc": "mcmc"}[cfg.kind]
    nu = value if axis == "nu" else 0.0
    lik = dict(cfg["likelihood"]) if "likelihood" in cfg.values else {}
    if axis == "family":
        lik["family"] = value
    if axis == "beta":
        lik["beta"] = value

    def wins(th):
        return int(np.sum(ttt.play_games(th, train, variant).rho == 1))

    objective = lambda th: wins(th) / K - nu * float(th @ th)
    loglik = None
    if method == "mcmc":
        spec = LikelihoodSpec(lik["family"], lik["beta"], K)
        loglik = lambda th: log_pseudo_likelihood(spec, wins(th) / K if spec.family == "exponential" else wins(th))
    theta, extra, traces, summ = _run_optimizer(cfg, method, S, objective, loglik, seed, index,
                                                _tag(axis, value, index), s2_over=value if axis == "sigma_init2" else None)
    tr = ttt.play_games(theta, train, variant)
    test, partial = ttt_test_set(cfg, ttt.NetworkPlayer(theta, variant), tr.opponent_log)
    te = ttt.play_games(theta, test, variant)
    row = {axis or "cell": value if axis else index, "win_pct_in": 100 * tr.win_fraction,
           "win_pct_out": 100 * te.win_fraction, "n_test": len(test), "test_set_partial": partial, **extra}
    summ[f"theta_{_tag(axis, value, index)}"] = {"kind": cfg.kind, "variant": variant, "theta": theta.tolist()}
    return CellResult(row, traces, summ)


def _cell_ttt_random(cfg: ExperimentConfig, axis, value, index) -> CellResult:
    res = ttt.play_games(ttt.RandomPlayer(), _test_seeds(cfg))
    n = len(res.rho)
    return CellResult({"policy": "random", "games": n, "win_pct": 100 * res.win_fraction,
                       "loss_pct": 100 * float(np.mean(res.rho == -1)), "draw_pct": 100 * float(np.mean(res.rho == 0))})


# ------------------------------------------------------------------ blackjack


def _bj_split(kind: str, variant: str):
    """Parameter layout: (S_bet, S_decision) for the kind."""
    sb = bj.bet_shape(variant).n_params
    sd = bj.decision_shape().n_params
    return {"bj1": (0, sd), "bj2": (sb, 0), "bj3": (sb, sd)}[kind]


def bj_policies_for(kind: str, theta, variant: str):
    sb, sd = _bj_split(kind, variant)
    theta = np.asarray(theta, dtype=float)
    dec = bj.NetworkDecision(theta[sb:], bj.decision_shape()) if sd else bj.BasicStrategy()
    bet = bj.NetworkBet(theta[:sb], variant) if sb else bj.UnitBet()
    return dec, bet


def _night_table(dec, bet, seeds, hands, rules):
    rows = []
    for s in seeds:
        r = bj.play_night(dec, bet, hands, s, rules)
        rows.append((s, r.roi, r.hit_rate, float(np.mean(r.stakes))))
    return rows


def _out_of_sample(rows) -> dict:
    roi = np.array([r[1] for r in rows])
    hit = np.array([r[2] for r in rows])
    return {"hit_rate_out": float(hit.mean()), "mu_roi_pct": 100 * float(roi.mean()),
            "sigma_roi_pct": 100 * float(roi.std(ddof=1)) if len(roi) > 1 else 0.0}


_NIGHT_COLUMNS = ("night", "seed", "roi", "hit_rate", "mean_stake")


def _night_trace(rows):
    return (_NIGHT_COLUMNS, [(i + 1, *r) for i, r in enumerate(rows)])


def _cell_bj(cfg: ExperimentConfig, axis, value, index) -> CellResult:
    b = cfg["bj"]
    variant = b["bet_variant"]
    seed = cfg["experiment"]["train_seed"]
    rules = _bj_rules(cfg)
    S = sum(_bj_split(cfg.kind, variant))
    nu = value if axis == "nu" else 0.0
    lik = dict(cfg["likelihood"])
    if axis == "beta":
        lik["beta"] = value
    if axis == "family":
        lik["family"] = value

    def roi(th):
        dec, bet = bj_policies_for(cfg.kind, th, variant)
        return bj.play_night(dec, bet, b["hands"], seed, rules).roi

    objective = lambda th: roi(th) - nu * float(th @ th)
    spec = LikelihoodSpec(lik["family"], lik["beta"], b["hands"])
    if spec.family != "exponential":
        raise ConfigError("[likelihood] family: blackjack objectives need the exponential likelihood (ROI may be negative)")
    loglik = lambda th: log_pseudo_likelihood(spec, roi(th))
    theta, extra, traces, summ = _run_optimizer(cfg, b["method"], S, objective, loglik, seed, index,
                                                _tag(axis, value, index), s2_over=value if axis == "sigma_init2" else None)
    dec, bet = bj_policies_for(cfg.kind, theta, variant)
    ins = bj.play_night(dec, bet, b["hands"], seed, rules)
    rows = _night_table(dec, bet, _test_seeds(cfg), b["hands"], rules)
    row = {axis or "cell": value if axis else index, "method": b["method"], "hit_rate_in": ins.hit_rate,
           "roi_pct_in": 100 * ins.roi, **_out_of_sample(rows), **extra}
    tag = _tag(axis, value, index)
    traces[f"nights_{tag}"] = _night_trace(rows)
    traces[f"stakes_{tag}"] = (("hand", "stake"), list(enumerate(ins.stakes.tolist(), 1)))
    summ[f"theta_{tag}"] = {"kind": cfg.kind, "bet_variant": variant, "theta": theta.tolist()}
    return CellResult(row, traces, summ)


def _cell_bj_policies(cfg: ExperimentConfig, axis, value, index) -> CellResult:
    b = cfg["bj"]
    rules = _bj_rules(cfg)
    tag = value
    pol = bj.baseline_policy(tag)
    ins = bj.play_night(pol, None, b["hands"], cfg["experiment"]["train_seed"], rules)
    rows = _night_table(pol, None, _test_seeds(cfg), b["hands"], rules)
    row = {"policy": tag, "hit_rate_in": ins.hit_rate, "roi_pct_in": 100 * ins.roi, **_out_of_sample(rows)}
    return CellResult(row, {f"nights_{index:02d}_{tag}": _night_trace(rows)})


def _cell_bj_bets(cfg: ExperimentConfig, axis, value, index) -> CellResult:
    b = cfg["bj"]
    rules = _bj_rules(cfg)
    dec = bj.BasicStrategy()
    if value == "random":
        name = "PurelyRandom"
        bet = _RandomBet(cfg["experiment"]["train_seed"])
    else:
        bet = bj.ThresholdBet(value)
        name = bet.name
    ins = bj.play_night(dec, bet, b["hands"], cfg["experiment"]["train_seed"], rules)
    rows = []
    for s in _test_seeds(cfg):
        pol = _RandomBet(s) if value == "random" else bet
        r = bj.play_night(dec, pol, b["hands"], s, rules)
        rows.append((s, r.roi, r.hit_rate, float(np.mean(r.stakes))))
    out = _out_of_sample(rows)
    row = {"betting_policy": name, "roi_pct_in": 100 * ins.roi, "mu_roi_pct": out["mu_roi_pct"],
           "sigma_roi_pct": out["sigma_roi_pct"]}
    return CellResult(row, {f"nights_{index:02d}_{name.replace('>', 'gt')}": _night_trace(rows)})


class _RandomBet(bj.BetPolicy):
    """Uniform betting propensity; its own stream per night."""
    name = "random"

    def __init__(self, seed: int):
        self.rng = seeded_rng(seed, 1 << 31)

    def bet(self, shoe):
        return float(self.rng.random())


# ------------------------------------------------------------------ classification


def classification_data(cfg: ExperimentConfig) -> ParticleDataset:
    c = cfg["classify"]
    if c["data_path"]:
        return ParticleDataset.read_csv(c["data_path"])
    return generate_particle_data(c["data_seed"], c["per_class"], c["radius"], c["noise"])


def classifier_shape(hidden_nodes: int = 3) -> NetworkShape:
    return NetworkShape.default(2, 3, "softmax", hidden_nodes)


def categorical_loglik(shape: NetworkShape, X, Y):
    def ll(theta):
        P = Network(shape, theta)(X)
        return float(np.sum(Y * np.log(np.maximum(P, LOG_FLOOR))))
    return ll


def accuracy(shape: NetworkShape, theta, X, Y) -> float:
    return float(np.mean(Network(shape, theta)(X).argmax(axis=1) == Y.argmax(axis=1)))


def _cell_classify(cfg: ExperimentConfig, axis, value, index) -> CellResult:
    c = cfg["classify"]
    s = cfg["sampler"]
    ds = classification_data(cfg)
    Xtr, Ytr, Xte, Yte = ds.split()
    shape = classifier_shape(c["hidden_nodes"])
    S = shape.n_params
    seed = cfg["experiment"]["train_seed"]
    theta1 = initial_theta(seed, S, s["sigma_init2"])
    ll = categorical_loglik(shape, Xtr, Ytr)
    traces, summ, extra = {}, {}, {}
    method = cfg.kind.split("-", 1)[1]
    if method == "mcmc":
        out = run_two_block(_chain_config(cfg), ll, seeded_rng(seed, 1), theta0=theta1)
        theta = map_estimate(out)
        d = _chain_summary(out, S)[1]
        traces.update(_chain_traces("classify", out))
        summ["chain_classify"] = d
        extra = {"acceptance": out.acceptance_rate, "ess": d["ess"]}
    elif method == "gd":
        res = gd_hybrid_run(shape, Xtr, Ytr, c["gd_steps"], c["gd_h"], s["a"], s["b"], seeded_rng(seed, 3),
                            theta0=theta1)
        theta = res.theta
        traces["gd_classify"] = (("step", "loss", "sigma2", "theta_norm2"),
                                 [(m, res.loss_trace[m], res.sigma2_trace[m],
                                   float(res.theta_trace[m] @ res.theta_trace[m])) for m in range(len(res.loss_trace))])
    else:
        res = ga_hybrid_run(_ga_config(cfg), ll, s["a"], s["b"], seeded_rng(seed, 2), init_pop=theta1)
        theta = res.best_theta
        traces.update(_ga_trace("classify", res))
    label = {"mcmc": "MCMC", "gd": "GD Hybrid", "ga": "GA Hybrid"}[method]
    row = {"method": label, "accuracy_in_pct": 100 * accuracy(shape, theta, Xtr, Ytr),
           "accuracy_out_pct": 100 * accuracy(shape, theta, Xte, Yte), **extra}
    summ["theta_classify"] = {"kind": cfg.kind, "theta": theta.tolist()}
    return CellResult(row, traces, summ)


# ------------------------------------------------------------------ driver

_CELL_FUNCS = {
    "nav-ga": _cell_nav, "nav-rs": _cell_nav, "nav-mcmc": _cell_nav,
    "ttt-ga": _cell_ttt, "ttt-rs": _cell_ttt, "ttt-mcmc": _cell_ttt, "ttt-random": _cell_ttt_random,
    "bj1": _cell_bj, "bj2": _cell_bj, "bj3": _cell_bj,
    "bj-policies": _cell_bj_policies, "bj-bets": _cell_bj_bets,
    "classify-mcmc": _cell_classify, "classify-gd": _cell_classify, "classify-ga": _cell_classify,
}


def cells(cfg: ExperimentConfig) -> list:
    if cfg.kind == "bj-policies":
        return [("policy", p, i) for i, p in enumerate(cfg["bj"]["policies"])]
    if cfg.kind == "bj-bets":
        return [("bet", v, i) for i, v in enumerate(["random", *cfg["bj"]["thresholds"]])]
    if cfg.kind.startswith("classify") or cfg.kind == "ttt-random":
        return [(None, None, 0)]
    axis, values = cfg.sweep_axis
    return [(axis, v, i) for i, v in enumerate(values)]


def run_cell(cfg: ExperimentConfig, axis, value, index) -> CellResult:
    log.info("%s: cell %d (%s = %s)", cfg.kind, index, axis, value)
    return _CELL_FUNCS[cfg.kind](cfg, axis, value, index)


def _run_cell_packed(args):
    return run_cell(*args)


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    if override is not None:
        return Path(override)
    d = Path(cfg["experiment"]["output_dir"])
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not d.is_absolute():
        d = Path(root) / d
    return d


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Run every cell and write the result table, traces and summaries; returns the output directory."""
    out = output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.ini").write_text(effective_config_text(cfg))
    jobs = [(cfg, a, v, i) for a, v, i in cells(cfg)]
    workers = min(cfg["experiment"]["workers"], len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_cell_packed, jobs))
    else:
        results = [_run_cell_packed(j) for j in jobs]

    columns = []
    for r in results:
        columns.extend(k for k in r.row if k not in columns)
    write_csv(out / "results.csv", columns, [{c: r.row.get(c, "") for c in columns} for r in results])
    if any(r.traces for r in results):
        (out / "traces").mkdir(exist_ok=True)
    for r in results:
        for stem, (cols, rows) in r.traces.items():
            write_csv(out / "traces" / f"{stem}.csv", cols, rows)
        for stem, d in r.summaries.items():
            (out / f"{stem}.json").write_text(json.dumps(_jsonable(d), indent=2, sort_keys=True) + "\n")
    log.info("wrote %s", out)
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x
