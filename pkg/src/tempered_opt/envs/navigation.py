"""Drones escaping an annulus of orbiting obstacles.

T drones start inside the inner disc; J obstacles circle the centre at fixed
radii. A drone succeeds when it reaches the outer radius and fails when it
comes within the crash radius of an obstacle or runs out of steps.

The parameter vector is ``[theta_1, network weights]``: ``theta_1`` sets the
detection radius through a scaled logistic, the network maps the scalar
proximity feature to a (dx, dy) move bounded by tanh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..nn import Network, NetworkShape
from ..rng import seeded_rng


@dataclass(frozen=True)
class NavParams:
    R_inner: float = 0.25
    R_outer: float = 1.0
    R_crash: float = 0.05
    K: int = 250
    J: int = 50
    T: int = 100
    delta: float = 0.01
    P_lower: float | None = None
    P_upper: float | None = None
    sf: float = 1.0

    def __post_init__(self):
        if not 0 < self.R_inner < self.R_outer:
            raise ValueError("need 0 < R_inner < R_outer")
        if self.R_crash <= 0:
            raise ValueError("R_crash must be positive")
        if self.P_lower is None:
            object.__setattr__(self, "P_lower", 2.0 * self.K)
        if self.P_upper is None:
            object.__setattr__(self, "P_upper", 3.0 * self.K)


@dataclass
class NavState:
    x: np.ndarray          # (T, 2) drone positions
    status: np.ndarray     # (T,) +1 escaped, -1 crashed or timed out, 0 live
    omega: np.ndarray      # (J,) angular speeds
    phi: np.ndarray        # (J,) phases
    r: np.ndarray          # (J,) orbital radii
    k: int = 0


def controller_shape(hidden_nodes: int = 3) -> NetworkShape:
    return NetworkShape.default(1, 2, "tanh", hidden_nodes)


def n_params(hidden_nodes: int = 3) -> int:
    return 1 + controller_shape(hidden_nodes).n_params


def init_env(seed: int, params: NavParams) -> NavState:
    p = params
    rng = seeded_rng(seed)
    omega = 2 * math.pi * rng.uniform(1.0 / p.P_upper, 1.0 / p.P_lower, p.J)
    phi = 2 * math.pi * rng.uniform(0.0, 1.0, p.J)
    r = rng.uniform(p.R_inner + p.R_crash, p.R_outer, p.J)
    rad = rng.uniform(0.0, p.R_inner, p.T)
    ang = 2 * math.pi * rng.uniform(0.0, 1.0, p.T)
    x = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    return NavState(x=x, status=np.zeros(p.T, dtype=np.int64), omega=omega, phi=phi, r=r)


def obstacle_positions(state: NavState, k: int) -> np.ndarray:
    a = state.omega * k + state.phi
    return np.column_stack([state.r * np.cos(a), state.r * np.sin(a)])


def obstacle_pos(j: int, k: int, state: NavState) -> np.ndarray:
    a = state.omega[j] * k + state.phi[j]
    return np.array([state.r[j] * math.cos(a), state.r[j] * math.sin(a)])


def game_status(drone, obstacles, params: NavParams) -> int:
    """-1 if within the crash radius of any obstacle, else +1 if outside the arena, else 0."""
    x = np.asarray(drone, dtype=float)
    O = np.asarray(obstacles, dtype=float).reshape(-1, 2)
    if O.size and np.min(np.hypot(*(O - x).T)) <= params.R_crash:
        return -1
    if math.hypot(x[0], x[1]) >= params.R_outer:
        return 1
    return 0


def _status_batch(X, O, p: NavParams) -> np.ndarray:
    d = _distances(X, O)
    crash = (d <= p.R_crash).any(axis=1)
    out = np.where(np.hypot(X[:, 0], X[:, 1]) >= p.R_outer, 1, 0)
    out[crash] = -1
    return out


def _distances(X, O) -> np.ndarray:
    diff = X[:, None, :] - O[None, :, :]
    return np.sqrt(np.einsum("tjk,tjk->tj", diff, diff))


def phi_logistic(theta1: float, sf: float = 1.0) -> float:
    """Detection radius sf / (1 + exp(-theta1))."""
    if theta1 >= 0:
        return sf / (1.0 + math.exp(-theta1))
    e = math.exp(theta1)
    return sf * e / (1.0 + e)


def _features(D, R_det: float, R_crash: float, variant: str) -> np.ndarray:
    inside = D <= R_det
    with np.errstate(divide="ignore"):
        recip = 1.0 / (D - R_crash)
    f = np.where(inside, recip, 0.0).sum(axis=1)
    none = ~inside.any(axis=1)
    if variant == "I":
        f[none] = 1.0 / (D[none].min(axis=1) - R_crash)
    elif variant != "II":
        raise ValueError(f"unknown feature variant {variant!r}")
    return f


def input_feature(drone, obstacles, R_detection: float, variant: str, params: NavParams) -> float:
    """Sum of 1/(d - R_crash) over obstacles within the detection radius.

    With none in range, variant I uses the nearest obstacle and variant II gives 0.
    """
    X = np.asarray(drone, dtype=float).reshape(1, 2)
    O = np.asarray(obstacles, dtype=float).reshape(-1, 2)
    return float(_features(_distances(X, O), R_detection, params.R_crash, variant)[0])


@dataclass
class EpisodeResult:
    k_successes: int
    statuses: np.ndarray
    trajectory: list | None = None

    @property
    def objective(self) -> float:
        return self.k_successes / len(self.statuses)


def run_episode(theta, seed: int, params: NavParams, variant: str = "I", record: bool = False,
                shape: NetworkShape | None = None) -> EpisodeResult:
    """Simulate K steps and count escapes.

    Each step: obstacles move, statuses update, live drones move by
    tanh(output) * delta, statuses update. Drones alive after K steps fail.
    """
    p = params
    theta = np.asarray(theta, dtype=float)
    shape = shape or controller_shape()
    net = Network(shape, theta[1:])
    R_det = phi_logistic(theta[0], p.sf)
    st = init_env(seed, p)
    X, status = st.x, st.status
    traj = [] if record else None
    for k in range(1, p.K + 1):
        O = obstacle_positions(st, k)
        live = status == 0
        if not live.any():
            break
        status[live] = _status_batch(X[live], O, p)
        live = status == 0
        if live.any():
            D = _distances(X[live], O)
            a0 = _features(D, R_det, p.R_crash, variant)
            X[live] += net(a0[:, None]) * p.delta
            status[live] = _status_batch(X[live], O, p)
        if record:
            traj.extend((k, t, X[t, 0], X[t, 1], int(status[t])) for t in range(p.T))
    status[status == 0] = -1
    st.k = p.K
    return EpisodeResult(int(np.sum(status == 1)), status, traj)
