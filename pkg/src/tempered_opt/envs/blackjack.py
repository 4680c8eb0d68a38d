"""Single-player blackjack against an S-17 dealer from a seeded multi-deck shoe.

Cards are integers 1..10 with the ace as 1. A night is a run of hands
played from one shoe; when fewer than half the cards remain the shoe is
reshuffled with the next seed in a deterministic sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from ..nn import Network, NetworkShape, masked_argmax, sigmoid
from ..rng import RngHandle, seeded_rng

STAY, HIT, SPLIT, SURRENDER, DOUBLE = range(5)
ACTION_NAMES = ("Stay", "Hit", "Split", "Surrender", "DoubleDown")

# legal-action sets, indexed by a small code
LEGAL_STAY_HIT = 0      # after the first decision
LEGAL_OPENING = 1       # two cards, not a pair
LEGAL_OPENING_PAIR = 2  # two equal cards
LEGAL_AFTER_SPLIT = 3   # two cards on a split hand: no re-split, no surrender
LEGAL_SETS = (
    (STAY, HIT),
    (STAY, HIT, SURRENDER, DOUBLE),
    (STAY, HIT, SPLIT, SURRENDER, DOUBLE),
    (STAY, HIT, DOUBLE),
)
LEGAL_MASKS = np.zeros((4, 5), dtype=bool)
for _code, _acts in enumerate(LEGAL_SETS):
    LEGAL_MASKS[_code, list(_acts)] = True

HILO = (0, -1, 1, 1, 1, 1, 1, 0, 0, 0, -1)  # indexed by card value 1..10


def hand_value(cards) -> int:
    s = sum(cards)
    if 1 in cards and s + 10 <= 21:
        return s + 10
    return s


def usable_ace(cards) -> bool:
    s = sum(cards)
    return 1 in cards and s + 10 <= 21


def legal_actions_bj(cards, tau: int | None = None, after_split: bool = False) -> tuple:
    """Legal actions for a live hand; ``tau`` is the number of cards held."""
    tau = len(cards) if tau is None else tau
    return LEGAL_SETS[legal_code(cards, tau, after_split)]


def legal_code(cards, tau: int, after_split: bool = False) -> int:
    if tau != 2:
        return LEGAL_STAY_HIT
    if after_split:
        return LEGAL_AFTER_SPLIT
    return LEGAL_OPENING_PAIR if cards[0] == cards[1] else LEGAL_OPENING


def decision_features(cards, upcard: int) -> np.ndarray:
    return np.array([hand_value(cards) / 21.0, upcard / 10.0, float(usable_ace(cards))])


# ---------------------------------------------------------------- shoe


def shoe_cards(decks: int) -> np.ndarray:
    one = [v for v in range(1, 10) for _ in range(4)] + [10] * 16
    return np.array(one * decks, dtype=np.int64)


@lru_cache(maxsize=256)
def _shuffled(seed: int, index: int, decks: int) -> tuple:
    return tuple(seeded_rng(seed, index).permutation(shoe_cards(decks)).tolist())


class Shoe:
    """Ordered shoe with a running Hi-Lo count and per-value tallies of dealt cards.

    The i-th shuffle of a night seeded ``seed`` uses the stream ``(seed, i)``,
    so reshuffle seeds advance deterministically and never coincide with
    another night's streams.
    """

    def __init__(self, seed: int, decks: int = 8, penetration: float = 0.5, cards=None):
        self.seed = seed
        self.decks = decks
        self.size = 52 * decks
        self.threshold = penetration * self.size
        self.shuffle_index = 0
        self._base = shoe_cards(decks)
        if cards is not None:
            self._load(list(cards))
            self.threshold = 0
        else:
            self._shuffle()

    def _load(self, cards):
        self.cards = cards
        self.pos = 0
        self.running_count = 0
        self.counts = [0] * 11

    def _shuffle(self):
        self._load(list(_shuffled(self.seed, self.shuffle_index, self.decks)))

    @property
    def remaining(self) -> int:
        return len(self.cards) - self.pos

    @property
    def history_len(self) -> int:
        return self.pos

    @property
    def history(self) -> list:
        return self.cards[: self.pos]

    def maybe_reshuffle(self) -> bool:
        if self.remaining < self.threshold:
            self.shuffle_index += 1
            self._shuffle()
            return True
        return False

    def draw(self) -> int:
        c = self.cards[self.pos]
        self.pos += 1
        self.counts[c] += 1
        self.running_count += HILO[c]
        return c

    def true_count(self) -> float:
        return self.running_count / (self.size - self.pos)


def true_count(history, decks: int) -> float:
    """Hi-Lo running count divided by the number of unseen cards."""
    n = 52 * decks
    if len(history) >= n:
        raise ValueError("shoe is empty")
    return sum(HILO[c] for c in history) / (n - len(history))


def bet_features(counts, running_count: int, n_seen: int, decks: int) -> np.ndarray:
    """11 betting inputs: TC/3, remaining share of ranks 2..9, of tens, of aces."""
    tc = running_count / (52 * decks - n_seen)
    f = np.empty(11)
    f[0] = tc / 3.0
    per_rank = 4.0 * decks
    for v in range(2, 10):
        f[v - 1] = 1.0 - counts[v] / per_rank
    f[9] = 1.0 - counts[10] / (16.0 * decks)
    f[10] = 1.0 - counts[1] / per_rank
    return f


def history_bet_features(history, decks: int) -> np.ndarray:
    counts = [0] * 11
    for c in history:
        counts[c] += 1
    return bet_features(counts, sum(HILO[c] for c in history), len(history), decks)


# ---------------------------------------------------------------- settlement


@dataclass
class Rules:
    """Table rules. The defaults reproduce the published baseline policy figures.

    ``doubled_loss=-1`` together with ``dealer_natural_wins=False`` and
    ``split_aces_one_card=False`` is the literal case table.
    """
    decks: int = 8
    penetration: float = 0.5
    doubled_loss: float = -2.0
    dealer_natural_wins: bool = True
    split_aces_one_card: bool = True


def settle(cards, dealer, doubled: bool = False, surrendered: bool = False, natural_ok: bool = True,
           doubled_loss: float = -2.0, dealer_natural_wins: bool = True) -> float:
    """Settlement multiplier for one completed player hand.

    ``natural_ok`` is False for split hands, whose two-card 21 is not a natural.
    """
    if len(cards) < 2 or len(dealer) < 2:
        raise ValueError("hand has not been played")
    if surrendered:
        return -0.5
    hp = hand_value(cards)
    hd = hand_value(dealer)
    n = len(cards)
    player_natural = natural_ok and n == 2 and hp == 21
    if dealer_natural_wins and len(dealer) == 2 and hd == 21 and not player_natural:
        return -2.0 if doubled else -1.0
    if doubled and n == 3 and hd < hp <= 21:
        return 2.0
    if hp <= 21 and hd > 21 and doubled:
        return 2.0
    if natural_ok and hp == 21 and n == 2 and hand_value(dealer[:2]) != 21:
        return 1.5
    if hd < hp <= 21 and not doubled:
        return 1.0
    if hp <= 21 and hd > 21 and not doubled:
        return 1.0
    if hp > 21 and doubled and n == 3:
        return -2.0
    if hp > 21 and not doubled:
        return -1.0
    if hp < hd <= 21:
        return doubled_loss if doubled else -1.0
    return 0.0


@dataclass
class HandRecord:
    hands: list
    dealer: list
    doubled: list
    surrendered: list
    actions: list
    stake: float
    settlements: list = field(default_factory=list)

    @property
    def s(self) -> float:
        return sum(self.settlements)

    @property
    def wagered_units(self) -> int:
        return len(self.hands) + sum(self.doubled)


# ---------------------------------------------------------------- policies


class DecisionPolicy:
    name = "policy"

    def act(self, cards, total: int, soft: bool, up: int, code: int, rng: RngHandle) -> int:
        raise NotImplementedError


class ThresholdPolicy(DecisionPolicy):
    """Mimic the dealer: hit below 17; H17 also hits soft 17."""

    def __init__(self, hit_soft17: bool = False):
        self.hit_soft17 = hit_soft17
        self.name = "H17" if hit_soft17 else "S17"

    def act(self, cards, total, soft, up, code, rng):
        if total < 17 or (self.hit_soft17 and total == 17 and soft):
            return HIT
        return STAY


class PurelyRandom(DecisionPolicy):
    name = "PurelyRandom"

    def act(self, cards, total, soft, up, code, rng):
        acts = LEGAL_SETS[code]
        return acts[int(rng.integers(len(acts)))]


class RandomStayHit(DecisionPolicy):
    name = "RandomStayHit"

    def act(self, cards, total, soft, up, code, rng):
        return HIT if rng.random() < 0.5 else STAY


class ChartError(KeyError):
    pass


def load_basic_strategy(path=None) -> dict:
    if path is None:
        text = resources.files("tempered_opt.envs").joinpath("data/basic_strategy_s17_das.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    chart = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, *cells = line.split()
        if len(cells) != 10:
            raise ChartError(f"row {key!r} needs 10 cells, got {len(cells)}")
        # columns 2..10 then ace; store by upcard value 1..10
        chart[key] = {up: cells[(up - 2) if up != 1 else 9] for up in range(1, 11)}
    return chart


class BasicStrategy(DecisionPolicy):
    name = "BasicStrategy"

    def __init__(self, chart: dict | None = None):
        self.chart = chart if chart is not None else load_basic_strategy()

    def _row(self, key):
        try:
            return self.chart[key]
        except KeyError:
            raise ChartError(f"basic strategy chart has no row {key!r}") from None

    def act(self, cards, total, soft, up, code, rng):
        if code == LEGAL_OPENING_PAIR:
            return self._resolve(self._row(f"P{cards[0]}")[up], code)
        key = f"S{total}" if soft else f"H{max(total, 4)}"
        return self._resolve(self._row(key)[up], code)

    @staticmethod
    def _resolve(cell: str, code: int) -> int:
        can_double = DOUBLE in LEGAL_SETS[code]
        if cell == "H":
            return HIT
        if cell == "S":
            return STAY
        if cell == "D":
            return DOUBLE if can_double else HIT
        if cell == "Ds":
            return DOUBLE if can_double else STAY
        if cell == "R":
            return SURRENDER if SURRENDER in LEGAL_SETS[code] else HIT
        if cell == "P":
            return SPLIT if SPLIT in LEGAL_SETS[code] else HIT
        raise ChartError(f"unknown chart code {cell!r}")


_DECISION_GRID = np.array([[v / 21.0, u / 10.0, a] for v in range(22) for u in range(11) for a in (0.0, 1.0)])


class NetworkDecision(DecisionPolicy):
    """Argmax of a 5-logit network over legal actions.

    The inputs take finitely many values, so the whole policy is tabulated
    once per parameter vector.
    """

    name = "network"

    def __init__(self, theta, shape: NetworkShape | None = None):
        self.shape = shape or decision_shape()
        logits = Network(self.shape, theta).logits(_DECISION_GRID)
        z = np.where(LEGAL_MASKS[:, None, :], logits[None, :, :], -np.inf)
        self.table = np.argmax(z, axis=2).reshape(4, 22, 11, 2).tolist()

    def act(self, cards, total, soft, up, code, rng):
        return self.table[code][total][up][1 if soft else 0]


def decision_shape(hidden_nodes: int = 3) -> NetworkShape:
    return NetworkShape.default(3, 5, "identity", hidden_nodes)


def bet_shape(variant: str = "I", hidden_nodes: int = 3) -> NetworkShape:
    return NetworkShape.default(1 if variant == "I" else 11, 1, "sigmoid", hidden_nodes)


# ---------------------------------------------------------------- betting


class BetPolicy:
    name = "bet"

    def bet(self, shoe: Shoe) -> float:
        """Betting propensity in [0, 1]."""
        raise NotImplementedError

    def stake(self, shoe: Shoe) -> float:
        if shoe.history_len == 0:
            return 1.0
        return 1.0 + 9.0 * self.bet(shoe)


class UnitBet(BetPolicy):
    name = "unit"

    def stake(self, shoe):
        return 1.0


class ThresholdBet(BetPolicy):
    """bet = TC/3 when TC exceeds ``x``, else 0."""

    def __init__(self, x: float):
        self.x = x
        self.name = f"TC>{x:g}"

    def bet(self, shoe):
        tc = shoe.true_count()
        return min(max(tc / 3.0, 0.0), 1.0) if tc > self.x else 0.0


class NetworkBet(BetPolicy):
    name = "network"

    def __init__(self, theta, variant: str = "I", shape: NetworkShape | None = None):
        self.variant = variant
        self.shape = shape or bet_shape(variant)
        self.net = Network(self.shape, theta)

    def bet(self, shoe):
        f = bet_features(shoe.counts, shoe.running_count, shoe.pos, shoe.decks)
        x = f[:1] if self.variant == "I" else f
        return float(self.net(x)[0])


def bet_size(theta_bet, history, decks: int = 8, variant: str = "I") -> float:
    """Stake in [1, 10] for a given card history."""
    if len(history) == 0:
        return 1.0
    f = history_bet_features(history, decks)
    x = f[:1] if variant == "I" else f
    return 1.0 + 9.0 * float(Network(bet_shape(variant), theta_bet)(x)[0])


# ---------------------------------------------------------------- play


def _play_hand(shoe: Shoe, policy: DecisionPolicy, rng: RngHandle, stake: float, rules: Rules) -> HandRecord:
    draw = shoe.draw
    c1 = draw()
    up = draw()
    c2 = draw()
    hole = draw()
    dealer = [up, hole]
    first = [c1, c2]
    rec = HandRecord(hands=[first], dealer=dealer, doubled=[False], surrendered=[False], actions=[[]], stake=stake)

    natural = hand_value(first) == 21
    if not natural:
        split = _play_player(first, policy, rng, up, 0, rec, draw, after_split=False)
        if split:
            rec.hands = [[c1, draw()], [c2]]
            rec.doubled = [False, False]
            rec.surrendered = [False, False]
            rec.actions = [rec.actions[0], []]
            aces = c1 == 1 and rules.split_aces_one_card
            if not aces:
                _play_player(rec.hands[0], policy, rng, up, 0, rec, draw, after_split=True)
            rec.hands[1].append(draw())
            if not aces:
                _play_player(rec.hands[1], policy, rng, up, 1, rec, draw, after_split=True)

    live = any(hand_value(h) <= 21 and not s for h, s in zip(rec.hands, rec.surrendered))
    if live and not natural:
        while hand_value(dealer) < 17:
            dealer.append(draw())
    split_round = len(rec.hands) == 2
    rec.settlements = [
        settle(h, dealer, d, s, natural_ok=not split_round, doubled_loss=rules.doubled_loss,
               dealer_natural_wins=rules.dealer_natural_wins)
        for h, d, s in zip(rec.hands, rec.doubled, rec.surrendered)
    ]
    return rec


def _play_player(cards, policy, rng, up, i, rec, draw, after_split) -> bool:
    """Play one hand in place. Returns True if the player chose to split.

    The turn ends automatically on a bust or on reaching 21.
    """
    while True:
        total = hand_value(cards)
        if total >= 21:
            return False
        code = legal_code(cards, len(cards), after_split)
        soft = 1 in cards and sum(cards) + 10 <= 21
        a = policy.act(cards, total, soft, up, code, rng)
        if a not in LEGAL_SETS[code]:
            raise ValueError(f"policy chose illegal action {ACTION_NAMES[a]}")
        rec.actions[i].append(a)
        if a == STAY:
            return False
        if a == HIT:
            cards.append(draw())
        elif a == DOUBLE:
            cards.append(draw())
            rec.doubled[i] = True
            return False
        elif a == SURRENDER:
            rec.surrendered[i] = True
            return False
        else:
            return True


class _LazyRng:
    """Stream for random policies, disjoint from the shuffle streams; built on first use."""

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = None

    def __getattr__(self, name):
        if self._rng is None:
            self._rng = seeded_rng(self.seed, 1 << 30)
        return getattr(self._rng, name)


@dataclass
class NightResult:
    """Outcome of a night. ``hit_rate`` is wins / (wins + losses), pushes excluded."""
    roi: float
    hit_rate: float
    stakes: np.ndarray
    settlements: np.ndarray
    records: list | None = None
    wins: int = 0
    losses: int = 0
    pushes: int = 0

    @property
    def win_fraction(self) -> float:
        return self.wins / len(self.settlements)


def play_night(decision_policy: DecisionPolicy, bet_policy: BetPolicy | None, hands: int, seed: int,
               rules: Rules | None = None, keep_records: bool = False, shoe: Shoe | None = None) -> NightResult:
    """Play ``hands`` rounds from a fresh shoe seeded by ``seed``."""
    rules = rules or Rules()
    bet_policy = bet_policy or UnitBet()
    if shoe is None:
        shoe = Shoe(seed, rules.decks, rules.penetration)
    rng = _LazyRng(seed)
    stakes = np.empty(hands)
    s_all = np.empty(hands)
    recs = [] if keep_records else None
    won = wagered = 0.0
    wins = losses = pushes = 0
    for k in range(hands):
        shoe.maybe_reshuffle()
        stake = bet_policy.stake(shoe)
        rec = _play_hand(shoe, decision_policy, rng, stake, rules)
        s = rec.s
        stakes[k] = stake
        s_all[k] = s
        won += s * stake
        wagered += stake
        if s > 0:
            wins += 1
        elif s < 0:
            losses += 1
        else:
            pushes += 1
        if keep_records:
            recs.append(rec)
    decided = wins + losses
    return NightResult(roi=won / wagered, hit_rate=wins / decided if decided else 0.0, stakes=stakes, settlements=s_all,
                       records=recs, wins=wins, losses=losses, pushes=pushes)


BASELINE_POLICIES = ("PurelyRandom", "RandomStayHit", "S17", "H17", "BasicStrategy")


def baseline_policy(tag: str) -> DecisionPolicy:
    if tag == "BasicStrategy":
        return BasicStrategy()
    if tag == "S17":
        return ThresholdPolicy(False)
    if tag == "H17":
        return ThresholdPolicy(True)
    if tag == "PurelyRandom":
        return PurelyRandom()
    if tag == "RandomStayHit":
        return RandomStayHit()
    raise ValueError(f"unknown baseline policy {tag!r}")


def baseline_action(tag: str, cards, upcard: int, after_split: bool = False, rng: RngHandle | None = None) -> int:
    pol = baseline_policy(tag)
    total = hand_value(cards)
    code = legal_code(cards, len(cards), after_split)
    return pol.act(cards, total, usable_ace(cards), upcard, code, rng or seeded_rng(0))
