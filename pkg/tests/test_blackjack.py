import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tempered_opt.envs import blackjack as bj
from tempered_opt.rng import seeded_rng

STAY, HIT, SPLIT, SURRENDER, DOUBLE = range(5)


def brute_value(cards):
    """Try every count of aces at 11; best total <= 21, else the smallest."""
    n_aces = cards.count(1)
    base = sum(cards)
    totals = [base + 10 * k for k in range(n_aces + 1)]
    ok = [t for t in totals if t <= 21]
    return max(ok) if ok else min(totals)


def test_hand_value_examples():
    assert bj.hand_value([1, 10]) == 21
    assert bj.hand_value([1, 10, 5]) == 16
    assert bj.hand_value([5, 6]) == 11


def test_hand_value_exhaustive_oracle():
    for n in range(1, 9):
        for cards in itertools.combinations_with_replacement(range(1, 11), n):
            assert bj.hand_value(list(cards)) == brute_value(list(cards)), cards


def test_settle_examples():
    assert bj.settle([10, 10], [10, 9]) == 1.0
    assert bj.settle([1, 10], [10, 10]) == 1.5
    assert bj.settle([10, 2, 10], [10, 7], doubled=True) == -2.0


def test_settle_other_cases():
    assert bj.settle([10, 8], [10, 8]) == 0.0
    assert bj.settle([5, 5, 9], [10, 6, 10], doubled=True) == 2.0
    assert bj.settle([10, 6], [10, 6, 10]) == 1.0
    assert bj.settle([10, 6, 10], [10, 6, 10]) == -1.0
    assert bj.settle([10, 6], [10, 7], surrendered=True) == -0.5
    assert bj.settle([10, 6], [10, 7]) == -1.0
    assert bj.settle([1, 10], [1, 10]) == 0.0
    assert bj.settle([1, 10], [10, 1], natural_ok=False) == -1.0


def test_settle_doubled_loss_rule():
    assert bj.settle([5, 4, 8], [10, 9], doubled=True) == -2.0
    assert bj.settle([5, 4, 8], [10, 9], doubled=True, doubled_loss=-1.0) == -1.0


def test_settle_dealer_natural_rule():
    assert bj.settle([7, 4, 10], [1, 10]) == -1.0
    assert bj.settle([7, 4, 10], [1, 10], dealer_natural_wins=False) == 0.0


def test_settle_unplayed_raises():
    with pytest.raises(ValueError):
        bj.settle([10], [10, 7])


def test_settle_totality():
    allowed = {2.0, 1.5, 1.0, -2.0, -1.0, -0.5, 0.0}
    rng = seeded_rng(0)
    for _ in range(20_000):
        p = rng.integers(1, 11, rng.integers(2, 6)).tolist()
        d = rng.integers(1, 11, rng.integers(2, 6)).tolist()
        d_ok = bj.hand_value(d) >= 17 or len(d) == 2
        if not d_ok:
            continue
        dbl = len(p) == 3 and bool(rng.random() < 0.3)
        assert bj.settle(p, d, doubled=dbl) in allowed


def test_legal_actions():
    assert bj.legal_actions_bj([8, 8]) == (STAY, HIT, SPLIT, SURRENDER, DOUBLE)
    assert bj.legal_actions_bj([8, 8, 2]) == (STAY, HIT)
    assert bj.legal_actions_bj([8, 9]) == (STAY, HIT, SURRENDER, DOUBLE)
    assert bj.legal_actions_bj([8, 8], after_split=True) == (STAY, HIT, DOUBLE)


def test_decision_features():
    assert np.allclose(bj.decision_features([1, 6], 10), [17 / 21, 1.0, 1])
    assert np.allclose(bj.decision_features([10, 6], 2), [16 / 21, 0.2, 0])
    assert np.allclose(bj.decision_features([1, 10, 10], 5), [1.0, 0.5, 0])


def test_true_count():
    assert bj.true_count([], 8) == 0
    assert bj.true_count([5], 8) == pytest.approx(1 / 415)
    hist = [5] * 10 + [8] * 198
    assert bj.true_count(hist, 8) == pytest.approx(10 / 208)
    with pytest.raises(ValueError):
        bj.true_count([5] * 52, 1)


def test_shoe_composition():
    c = Counter(bj.shoe_cards(2).tolist())
    assert c[10] == 32 and all(c[v] == 8 for v in range(1, 10))


def test_shoe_conservation_and_reshuffle():
    shoe = bj.Shoe(3, decks=1)
    full = Counter(bj.shoe_cards(1).tolist())
    seen = 0
    while not shoe.maybe_reshuffle():
        shoe.draw()
        seen += 1
        assert Counter(shoe.history) + Counter(shoe.cards[shoe.pos:]) == full
        assert shoe.true_count() == pytest.approx(bj.true_count(shoe.history, 1))
    assert seen == 27 and shoe.shuffle_index == 1 and shoe.pos == 0
    assert shoe.cards != list(bj._shuffled(3, 0, 1))
    assert bj.Shoe(3, decks=1).cards == list(bj._shuffled(3, 0, 1))


def test_bet_features_fresh_and_ranges():
    f = bj.history_bet_features([], 8)
    assert f[0] == 0 and np.all(f[1:] == 1)
    shoe = bj.Shoe(5)
    for _ in range(150):
        shoe.draw()
    f = bj.bet_features(shoe.counts, shoe.running_count, shoe.pos, 8)
    assert np.all((f[1:] >= 0) & (f[1:] <= 1))
    assert np.allclose(f, bj.history_bet_features(shoe.history, 8))


def test_bet_size():
    th = np.zeros(bj.bet_shape("II").n_params)
    assert bj.bet_size(th * 0 + 50, [], 8, "II") == 1.0
    assert bj.bet_size(th, [5, 6], 8, "II") == pytest.approx(5.5)
    big = np.zeros(bj.bet_shape("I").n_params)
    big[-1] = 100.0
    assert bj.bet_size(big, [5], 8, "I") == pytest.approx(10.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["I", "II"]))
def test_bet_size_in_range(seed, variant):
    rng = seeded_rng(seed)
    th = rng.normal(size=bj.bet_shape(variant).n_params) * 5
    hist = rng.integers(1, 11, rng.integers(0, 200)).tolist()
    assert 1.0 <= bj.bet_size(th, hist, 8, variant) <= 10.0


def _fixture_night(cards, policy, hands, **kw):
    shoe = bj.Shoe(0, decks=8, cards=cards)
    return bj.play_night(policy, None, hands, 0, shoe=shoe, **kw)


def test_fixture_all_pushes():
    res = _fixture_night([10] * 40, bj.ThresholdPolicy(), 10)
    assert res.roi == 0 and res.pushes == 10


def test_fixture_roi_arithmetic():
    deck = [10, 10, 10, 9,  10, 10, 7, 8,  1, 10, 10, 9,  10, 10, 10, 10]
    res = _fixture_night(deck, bj.ThresholdPolicy(), 4)
    assert res.settlements.tolist() == [1.0, -1.0, 1.5, 0.0]
    assert res.roi == pytest.approx(0.375)


def test_dealer_rule_fuzz():
    res = bj.play_night(bj.RandomStayHit(), None, 20_000, 11, keep_records=True)
    for rec in res.records:
        d = rec.dealer
        for i in range(2, len(d)):
            assert bj.hand_value(d[:i]) < 17
        if len(d) > 2:
            assert bj.hand_value(d) >= 17


def test_split_hand_structure():
    # player 8,8 vs 6 under Basic Strategy splits
    deck = [8, 6, 8, 10, 3, 2, 10, 10, 10, 10, 10, 10]
    res = _fixture_night(deck, bj.BasicStrategy(), 1, keep_records=True)
    rec = res.records[0]
    assert len(rec.hands) == 2 and rec.hands[0][:2] == [8, 3] and rec.hands[1][0] == 8
    assert rec.actions[0][0] == SPLIT


def test_roi_bound_unit_no_double():
    res = bj.play_night(bj.ThresholdPolicy(), None, 5000, 2)
    assert np.all((res.settlements >= -1) & (res.settlements <= 1.5))


def test_night_deterministic():
    th = seeded_rng(1).normal(size=bj.decision_shape().n_params)
    a = bj.play_night(bj.NetworkDecision(th), None, 500, 9)
    b = bj.play_night(bj.NetworkDecision(th), None, 500, 9)
    assert a.roi == b.roi and np.array_equal(a.settlements, b.settlements)


def test_network_decision_table_matches_forward_pass():
    from tempered_opt.nn import Network, masked_argmax
    th = seeded_rng(2).normal(size=bj.decision_shape().n_params)
    pol = bj.NetworkDecision(th)
    net = Network(bj.decision_shape(), th)
    for cards, up in [([10, 6], 10), ([1, 6], 4), ([8, 8], 6), ([5, 3, 2], 9)]:
        code = bj.legal_code(cards, len(cards))
        x = bj.decision_features(cards, up)[None, :]
        want = int(masked_argmax(net.logits(x), bj.LEGAL_MASKS[code][None, :])[0])
        assert pol.act(cards, bj.hand_value(cards), bj.usable_ace(cards), up, code, None) == want


def test_threshold_bet():
    shoe = bj.Shoe(0, decks=1, cards=[2] * 30 + [10] * 22)
    for _ in range(6):
        shoe.draw()
    assert shoe.true_count() == pytest.approx(6 / 46)
    assert bj.ThresholdBet(0.0).stake(shoe) == pytest.approx(1 + 9 * (6 / 46) / 3)
    assert bj.ThresholdBet(1.0).stake(shoe) == 1.0


def test_baseline_actions():
    for up in range(1, 11):
        assert bj.baseline_action("S17", [10, 6], up) == HIT
        assert bj.baseline_action("S17", [10, 7], up) == STAY
    assert bj.baseline_action("H17", [1, 6], 5) == HIT
    assert bj.baseline_action("S17", [1, 6], 5) == STAY
    assert bj.baseline_action("BasicStrategy", [8, 8], 10) == SPLIT
    assert bj.baseline_action("BasicStrategy", [10, 6], 10) == SURRENDER
    assert bj.baseline_action("BasicStrategy", [6, 5], 6) == DOUBLE
    assert bj.baseline_action("BasicStrategy", [10, 7], 1) == STAY


def test_purely_random_uniform():
    rng = seeded_rng(5)
    draws = [bj.baseline_action("PurelyRandom", [8, 9], 7, rng=rng) for _ in range(40_000)]
    freq = np.bincount(draws, minlength=5) / len(draws)
    assert freq[SPLIT] == 0
    assert np.allclose(freq[[STAY, HIT, SURRENDER, DOUBLE]], 0.25, atol=0.01)


def test_chart_complete_and_errors(tmp_path):
    chart = bj.load_basic_strategy()
    keys = [f"H{t}" for t in range(4, 22)] + [f"S{t}" for t in range(13, 22)] + [f"P{v}" for v in range(1, 11)]
    for k in keys:
        assert k in chart, k
    with pytest.raises(bj.ChartError):
        bj.BasicStrategy({})._row("H12")
    bad = tmp_path / "bad.txt"
    bad.write_text("H12 H H S\n")
    with pytest.raises(bj.ChartError):
        bj.load_basic_strategy(bad)
    with pytest.raises(bj.ChartError):
        bj.BasicStrategy._resolve("Q", bj.LEGAL_OPENING)


def test_unknown_baseline():
    with pytest.raises(ValueError):
        bj.baseline_policy("Martingale")
