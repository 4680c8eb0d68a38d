"""Columnar plot data from run outputs. No plotting happens here."""

from __future__ import annotations

import csv
import json

import numpy as np

from .envs import blackjack as bj
from .envs import navigation as nav
from .harness import write_csv
from .nn import Network

PLOT_KINDS = ("response-curve", "bet-histogram", "roi-histogram", "sigma2-histogram", "norm-trace")


class PlotKindError(ValueError):
    pass


def _column(path, name: str) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and name not in rows[0]:
        raise KeyError(f"{path}: no column {name!r}")
    return np.array([float(r[name]) for r in rows])


def histogram_rows(values, bins) -> list:
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    n = max(values.size, 1)
    return [(edges[i], edges[i + 1], int(counts[i]), counts[i] / n) for i in range(len(counts))]


def response_curve(theta_doc: dict, lo: float = 0.0, hi: float = 50.0, points: int = 201):
    """Sweep the scalar network input over a grid and record the outputs.

    Navigation controllers map a^0 to the two movement components; blackjack
    bet networks with a single input map the true count to the betting propensity.
    """
    theta = np.asarray(theta_doc["theta"], dtype=float)
    grid = np.linspace(lo, hi, points)
    kind = theta_doc.get("kind", "")
    if kind.startswith("nav"):
        out = Network(nav.controller_shape(), theta[1:])(grid[:, None])
        return ("a0", "x1", "x2"), [(g, o[0], o[1]) for g, o in zip(grid, out)]
    if kind in ("bj2", "bj3") and theta_doc.get("bet_variant") == "I":
        shape = bj.bet_shape("I")
        out = Network(shape, theta[: shape.n_params])(grid[:, None])
        return ("true_count", "bet"), [(g, o[0]) for g, o in zip(grid, out)]
    raise PlotKindError(f"response-curve needs a navigation controller or a single-input bet network, got {kind!r}")


def emit_plot_data(kind: str, in_path, out_path, bins: int = 40, burn_in: int = 0, lo: float = 0.0,
                   hi: float = 50.0, points: int = 201) -> None:
    if kind == "response-curve":
        with open(in_path) as fh:
            cols, rows = response_curve(json.load(fh), lo, hi, points)
    elif kind == "bet-histogram":
        stakes = _column(in_path, "stake")
        cols, rows = ("bin_left", "bin_right", "count", "mass"), histogram_rows(stakes, np.arange(1.0, 10.5, 0.5))
    elif kind == "roi-histogram":
        cols, rows = ("bin_left", "bin_right", "count", "mass"), histogram_rows(_column(in_path, "roi"), bins)
    elif kind == "sigma2-histogram":
        s2 = _column(in_path, "sigma2")[burn_in:]
        cols, rows = ("bin_left", "bin_right", "count", "mass"), histogram_rows(s2, bins)
    elif kind == "norm-trace":
        it = _column(in_path, "iteration")
        n2 = _column(in_path, "theta_norm2")
        cols, rows = ("iteration", "theta_norm2"), list(zip(it.astype(int).tolist(), n2.tolist()))
    else:
        raise PlotKindError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    write_csv(out_path, cols, rows)
