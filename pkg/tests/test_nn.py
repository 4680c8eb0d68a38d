import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tempered_opt.nn import (
    LOG_FLOOR,
    Network,
    NetworkShape,
    NoActionError,
    ShapeError,
    cross_entropy_l2,
    forward,
    grad_cross_entropy_l2,
    masked_argmax,
    softmax_over_valid,
)
from tempered_opt.rng import seeded_rng


def test_param_count_formula():
    s = NetworkShape((2, 3, 3, 5))
    assert s.n_params == 2 * 3 + 3 + 3 * 3 + 3 + 3 * 5 + 5


def test_default_shape_two_hidden_layers_of_three():
    s = NetworkShape.default(9, 9, "softmax")
    assert s.sizes == (9, 3, 3, 9) and s.hidden == "tanh"


def test_zero_params_tanh_output_is_zero():
    s = NetworkShape((4, 3, 3, 2), output="tanh")
    assert np.array_equal(forward(np.zeros(s.n_params), s, np.ones(4)), np.zeros(2))


def test_zero_params_sigmoid_output_is_half():
    s = NetworkShape((4, 3, 3, 2), output="sigmoid")
    assert np.allclose(forward(np.zeros(s.n_params), s, np.arange(4.0)), 0.5)


def test_hand_evaluated_1_1_1():
    s = NetworkShape((1, 1, 1), hidden="tanh", output="identity")
    theta = np.array([1.0, 0.0, 1.0, 0.0])  # W1, b1, W2, b2
    assert forward(theta, s, [0.5])[0] == pytest.approx(0.46212, abs=1e-5)


def test_packing_order_layer_major_weights_then_biases():
    s = NetworkShape((2, 3, 1))
    theta = np.arange(s.n_params, dtype=float)
    (W1, b1), (W2, b2) = s.unpack(theta)
    assert np.array_equal(W1, [[0, 1, 2], [3, 4, 5]])
    assert np.array_equal(b1, [6, 7, 8])
    assert np.array_equal(W2.ravel(), [9, 10, 11]) and b2[0] == 12
    assert np.array_equal(s.pack(s.unpack(theta)), theta)


def test_length_mismatch_raises():
    s = NetworkShape((2, 3, 1))
    with pytest.raises(ShapeError):
        Network(s, np.zeros(s.n_params + 1))
    with pytest.raises(ShapeError):
        forward(np.zeros(s.n_params), s, np.zeros(3))


def test_batch_matches_rowwise():
    s = NetworkShape((3, 4, 2), output="tanh")
    th = seeded_rng(1).standard_normal(s.n_params)
    X = seeded_rng(2).standard_normal((6, 3))
    batch = forward(th, s, X)
    assert np.allclose(batch, np.array([forward(th, s, x) for x in X]))


def test_softmax_uniform_and_tie():
    p, i = softmax_over_valid([0, 0, 0], [True] * 3)
    assert np.allclose(p, 1 / 3) and i == 0


def test_softmax_single_valid():
    p, i = softmax_over_valid([1, 2, 3], [False, True, False])
    assert np.array_equal(p, [0, 1, 0]) and i == 1


def test_softmax_arithmetic():
    p, _ = softmax_over_valid([math.log(2), 0, 0], [True] * 3)
    assert np.allclose(p, [0.5, 0.25, 0.25])


def test_softmax_empty_valid_raises():
    with pytest.raises(NoActionError):
        softmax_over_valid([1, 2], [False, False])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=1, max_size=9), st.data(), st.integers(-100, 100))
def test_softmax_properties(logits, data, c):
    # integer logits keep the shift exact, so ties survive it
    valid = data.draw(st.lists(st.booleans(), min_size=len(logits), max_size=len(logits)))
    if not any(valid):
        valid[0] = True
    p, i = softmax_over_valid(logits, valid)
    assert abs(p.sum() - 1) < 1e-12
    assert np.all(p[~np.array(valid)] == 0)
    assert valid[i]
    shifted = np.array(logits) + c
    p2, i2 = softmax_over_valid(shifted, valid)
    assert i2 == i
    assert np.allclose(p2, p, atol=1e-9)


def test_masked_argmax_rows_agree_with_softmax_argmax():
    rng = seeded_rng(4)
    Z = rng.standard_normal((20, 9))
    V = rng.random((20, 9)) < 0.5
    V[:, 4] = True
    got = masked_argmax(Z, V)
    assert all(got[r] == softmax_over_valid(Z[r], V[r])[1] for r in range(20))


def _fd_grad(f, theta, h=1e-5):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def _random_instance(seed):
    rng = seeded_rng(seed)
    d_in = int(rng.integers(1, 4))
    hidden = tuple(int(x) for x in rng.integers(1, 4, size=int(rng.integers(1, 3))))
    k = int(rng.integers(2, 4))
    shape = NetworkShape((d_in, *hidden, k), hidden="tanh", output="softmax")
    if shape.n_params > 30:
        shape = NetworkShape((d_in, 2, k), hidden="tanh", output="softmax")
    theta = rng.standard_normal(shape.n_params)
    X = rng.standard_normal((5, d_in))
    Y = np.eye(k)[rng.integers(0, k, 5)]
    s2 = float(rng.uniform(0.5, 5))
    return shape, theta, X, Y, s2


def _rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


@pytest.mark.parametrize("seed", range(100))
def test_gradient_matches_central_differences(seed):
    shape, theta, X, Y, s2 = _random_instance(seed)
    g = grad_cross_entropy_l2(theta, shape, X, Y, s2)
    fd = _fd_grad(lambda t: cross_entropy_l2(t, shape, X, Y, s2), theta)
    assert _rel_err(g, fd) < 1e-4


def test_gradient_empty_dataset_is_penalty_only():
    s = NetworkShape((2, 3, 3), output="softmax")
    th = seeded_rng(0).standard_normal(s.n_params)
    g = grad_cross_entropy_l2(th, s, np.zeros((0, 2)), np.zeros((0, 3)), 2.5)
    assert np.array_equal(g, th / 2.5)


def test_penalty_gradient_vanishes_at_zero():
    s = NetworkShape((2, 3, 3), output="softmax")
    X = seeded_rng(0).standard_normal((6, 2))
    Y = np.eye(3)[[0, 1, 2, 0, 1, 2]]
    g_inf = grad_cross_entropy_l2(np.zeros(s.n_params), s, X, Y, math.inf)
    g_one = grad_cross_entropy_l2(np.zeros(s.n_params), s, X, Y, 1.0)
    assert np.array_equal(g_inf, g_one)


def test_log_clamp_keeps_loss_finite():
    s = NetworkShape((1, 2), hidden="tanh", output="softmax")
    theta = np.array([0.0, 0.0, 2000.0, -2000.0])  # logits saturate: p(class 1) underflows
    X = np.array([[0.0]])
    Y = np.array([[0.0, 1.0]])
    loss = cross_entropy_l2(theta, s, X, Y, 1.0)
    assert np.isfinite(loss) and loss >= -math.log(LOG_FLOOR)
    assert np.all(np.isfinite(grad_cross_entropy_l2(theta, s, X, Y, 1.0)))


def test_gradient_requires_softmax_head():
    s = NetworkShape((2, 2), output="tanh")
    with pytest.raises(ShapeError):
        grad_cross_entropy_l2(np.zeros(s.n_params), s, np.zeros((1, 2)), np.zeros((1, 2)), 1.0)
