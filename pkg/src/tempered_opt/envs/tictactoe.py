"""Tic-tac-toe against a uniformly random opponent.

The board is a 9-vector in row-major order with the player's token O = +1
(moving first) and the opponent's X = -1. Post-multiplying by the 9x8 line
matrix gives the token sum on each row, column and diagonal.

Games are played in lockstep across a batch of seeds. Every random choice in
game ``g`` comes from uniforms pre-drawn from that game's own seed, so a game's
outcome depends only on (policy, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import Network, NetworkShape, NoActionError, masked_argmax
from ..rng import RngHandle, seeded_rng

STATE_MATRIX = np.array(
    [
        [1, 0, 0, 1, 0, 0, 1, 0],
        [1, 0, 0, 0, 1, 0, 0, 0],
        [1, 0, 0, 0, 0, 1, 0, 1],
        [0, 1, 0, 1, 0, 0, 0, 0],
        [0, 1, 0, 0, 1, 0, 1, 1],
        [0, 1, 0, 0, 0, 1, 0, 0],
        [0, 0, 1, 1, 0, 0, 0, 1],
        [0, 0, 1, 0, 1, 0, 0, 0],
        [0, 0, 1, 0, 0, 1, 1, 0],
    ],
    dtype=float,
)

NONTERMINAL = 2  # status code for a game still in progress


def game_status(board):
    """+1 / -1 for a completed line, 0 for a dead draw, None while play continues."""
    code = int(status_batch(np.asarray(board, dtype=float)[None, :])[0])
    return None if code == NONTERMINAL else code


def status_batch(M: np.ndarray) -> np.ndarray:
    """Status codes for a batch of boards (rows)."""
    L = M @ STATE_MATRIX
    out = np.full(M.shape[0], NONTERMINAL, dtype=np.int64)
    vp = (np.maximum(M, 0) @ STATE_MATRIX) > 0
    vm = (np.maximum(-M, 0) @ STATE_MATRIX) > 0
    out[np.sum(vp & vm, axis=1) == 8] = 0
    out[(L == -3).any(axis=1)] = -1
    out[(L == 3).any(axis=1)] = 1
    return out


def legal_actions(board) -> list:
    """1-based indices of empty cells."""
    return [i + 1 for i, v in enumerate(board) if v == 0]


def features(M: np.ndarray, variant: str) -> np.ndarray:
    if variant == "I":
        return M
    if variant == "II":
        return np.hstack([M, M @ STATE_MATRIX])
    raise ValueError(f"unknown feature variant {variant!r}")


def player_shape(variant: str = "I", hidden_nodes: int = 3) -> NetworkShape:
    return NetworkShape.default(9 if variant == "I" else 17, 9, "softmax", hidden_nodes)


def _pick_uniform(legal: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise: the floor(u * n)-th legal cell (0-based)."""
    n = legal.sum(axis=1)
    if np.any(n == 0):
        raise NoActionError("no legal action")
    r = np.minimum((u * n).astype(np.int64), n - 1)
    hit = (np.cumsum(legal, axis=1) == (r + 1)[:, None]) & legal
    return np.argmax(hit, axis=1)


class NetworkPlayer:
    """Masked-softmax argmax over the 9 cells."""

    def __init__(self, theta, variant: str = "I", shape: NetworkShape | None = None):
        self.variant = variant
        self.shape = shape or player_shape(variant)
        self.net = Network(self.shape, theta)

    def choose(self, M, legal, u):
        if not legal.any(axis=1).all():
            raise NoActionError("no legal action")
        return masked_argmax(self.net.logits(features(M, self.variant)), legal)


class RandomPlayer:
    def choose(self, M, legal, u):
        return _pick_uniform(legal, u)


def player_action(board, theta, variant: str = "I") -> int:
    """1-based cell chosen by the network player."""
    M = np.asarray(board, dtype=float)[None, :]
    return int(NetworkPlayer(theta, variant).choose(M, M == 0, None)[0]) + 1


def opponent_action(board, rng: RngHandle) -> int:
    """1-based cell drawn uniformly from the empty cells."""
    M = np.asarray(board, dtype=float)[None, :]
    return int(_pick_uniform(M == 0, np.array([rng.random()]))[0]) + 1


def game_uniforms(seed):
    """(opponent uniforms, player uniforms) for one game seed.

    ``seed`` is an int or a tuple ``(seed, index, ...)`` naming a sub-stream.
    """
    key = tuple(seed) if isinstance(seed, tuple) else (seed,)
    return seeded_rng(*key, 0).random(4), seeded_rng(*key, 1).random(5)


_UNIFORM_CACHE: dict = {}


def _uniforms(seeds) -> tuple:
    key = tuple(seeds)
    hit = _UNIFORM_CACHE.get(key)
    if hit is None:
        pairs = [game_uniforms(s) for s in seeds]
        hit = (np.array([p[0] for p in pairs]).reshape(len(seeds), 4),
               np.array([p[1] for p in pairs]).reshape(len(seeds), 5))
        if len(_UNIFORM_CACHE) > 64:
            _UNIFORM_CACHE.clear()
        _UNIFORM_CACHE[key] = hit
    return hit


@dataclass
class GamesResult:
    win_fraction: float
    rho: np.ndarray
    opponent_log: list
    player_log: list
    seeds: list


def _as_player(player, variant: str):
    # ndarray has its own .choose, so test for parameter vectors explicitly
    if isinstance(player, (np.ndarray, list, tuple)):
        return NetworkPlayer(player, variant)
    return player


def play_games(player, seeds, variant: str = "I") -> GamesResult:
    """Play one game per seed; ``player`` is a parameter vector or a player object."""
    player = _as_player(player, variant)
    seeds = list(seeds)
    K = len(seeds)
    opp_u, ply_u = _uniforms(seeds)
    M = np.zeros((K, 9))
    status = np.full(K, NONTERMINAL, dtype=np.int64)
    moves = np.zeros((K, 9), dtype=np.int64)  # 1-based cell per ply, 0 = no move
    for ply in range(9):
        idx = np.flatnonzero(status == NONTERMINAL)
        if idx.size == 0:
            break
        Ms = M[idx]
        legal = Ms == 0
        if ply % 2 == 0:
            a = player.choose(Ms, legal, ply_u[idx, ply // 2])
            token = 1.0
        else:
            a = _pick_uniform(legal, opp_u[idx, ply // 2])
            token = -1.0
        M[idx, a] = token
        moves[idx, ply] = a + 1
        status[idx] = status_batch(M[idx])
    if np.any(status == NONTERMINAL):
        raise RuntimeError("a game did not terminate within 9 plies")
    opp_log = [tuple(int(x) for x in row[1::2] if x) for row in moves]
    ply_log = [tuple(int(x) for x in row[0::2] if x) for row in moves]
    return GamesResult(float(np.mean(status == 1)), status, opp_log, ply_log, seeds)


class TestSetExhausted(RuntimeError):
    def __init__(self, msg, seeds):
        super().__init__(msg)
        self.seeds = seeds


def build_test_set(train_log, target_count: int, player, seed_start: int, variant: str = "I",
                   batch: int = 2000) -> list:
    """First ``target_count`` seeds (from ``seed_start`` upward) whose opponent
    sequences are new: distinct from each other and from ``train_log``.

    Raises :class:`TestSetExhausted` (carrying the seeds found) after
    10 x target_count candidates.
    """
    player = _as_player(player, variant)
    seen = set(tuple(s) for s in train_log)
    out = []
    cap = 10 * target_count
    s = seed_start
    while len(out) < target_count and s < seed_start + cap:
        cand = list(range(s, min(s + batch, seed_start + cap)))
        res = play_games(player, cand, variant)
        for seed, seq in zip(cand, res.opponent_log):
            if seq not in seen:
                seen.add(seq)
                out.append(seed)
                if len(out) == target_count:
                    break
        s = cand[-1] + 1
    if len(out) < target_count:
        raise TestSetExhausted(
            f"only {len(out)} distinct opponent sequences among {cap} candidate seeds", out)
    return out
