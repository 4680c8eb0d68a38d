"""Small feed-forward networks on a flat parameter vector.

Layer ``l`` computes ``a_l = act_l(a_{l-1} @ W_l + b_l)`` with ``W_l`` of shape
``(d_{l-1}, d_l)``. The flat vector is packed layer by layer, each layer
holding ``W_l`` in row-major ``(k, j)`` order followed by ``b_l``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-300

ACTIVATIONS = ("tanh", "sigmoid", "softmax", "identity")


class ShapeError(ValueError):
    pass


class NoActionError(ValueError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax_rows(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _apply(name: str, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "softmax":
        return _softmax_rows(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class NetworkShape:
    sizes: tuple
    hidden: str = "tanh"
    output: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(d) for d in self.sizes))
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ShapeError(f"need at least an input and an output layer, got {self.sizes}")
        for a in (self.hidden, self.output):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @classmethod
    def default(cls, d_in: int, d_out: int, output: str, hidden_nodes: int = 3, hidden_layers: int = 2):
        return cls((d_in,) + (hidden_nodes,) * hidden_layers + (d_out,), "tanh", output)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def unpack(self, theta) -> list:
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.shape[0] != self.n_params:
            raise ShapeError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        layers, i = [], 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            W = theta[i : i + a * b].reshape(a, b)
            i += a * b
            layers.append((W, theta[i : i + b]))
            i += b
        return layers

    def pack(self, layers) -> np.ndarray:
        parts = []
        for W, b in layers:
            parts.append(np.asarray(W, dtype=float).ravel())
            parts.append(np.asarray(b, dtype=float).ravel())
        theta = np.concatenate(parts)
        if theta.shape[0] != self.n_params:
            raise ShapeError("layers do not match the shape")
        return theta


class Network:
    """A shape bound to one parameter vector; unpacks once, evaluates many times."""

    def __init__(self, shape: NetworkShape, theta):
        self.shape = shape
        self.layers = shape.unpack(theta)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.shape.sizes[0]:
            raise ShapeError(f"input has {x.shape[-1]} features, network expects {self.shape.sizes[0]}")
        a = x
        last = len(self.layers) - 1
        for l, (W, b) in enumerate(self.layers):
            a = _apply(self.shape.output if l == last else self.shape.hidden, a @ W + b)
        return a

    def logits(self, x):
        """Output pre-activations (used for masked softmax heads)."""
        a = np.asarray(x, dtype=float)
        last = len(self.layers) - 1
        for l, (W, b) in enumerate(self.layers):
            z = a @ W + b
            a = z if l == last else _apply(self.shape.hidden, z)
        return a


def forward(theta, shape: NetworkShape, x):
    """Evaluate the network on one input vector or a batch of rows."""
    return Network(shape, theta)(x)


def softmax_over_valid(logits, valid):
    """Softmax restricted to ``valid`` entries; returns (probs, argmax).

    Invalid entries are treated as -inf and get probability exactly 0.
    Ties in the argmax go to the lowest index.
    """
    logits = np.asarray(logits, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise NoActionError("no valid action")
    z = np.where(valid, logits, -np.inf)
    m = z.max()
    e = np.where(valid, np.exp(z - m), 0.0)
    probs = e / e.sum()
    return probs, int(np.argmax(z))


def masked_argmax(logits, valid):
    """Row-wise argmax over valid entries (lowest index on ties)."""
    z = np.where(valid, logits, -np.inf)
    return np.argmax(z, axis=-1)


def cross_entropy_l2(theta, shape: NetworkShape, X, Y, sigma2: float) -> float:
    """-sum_i sum_k y_ik log p_k(x_i) + ||theta||^2 / (2 sigma2)."""
    theta = np.asarray(theta, dtype=float)
    pen = theta @ theta / (2.0 * sigma2)
    if len(X) == 0:
        return float(pen)
    P = Network(shape, theta)(X)
    return float(-np.sum(Y * np.log(np.maximum(P, LOG_FLOOR))) + pen)


def grad_cross_entropy_l2(theta, shape: NetworkShape, X, Y, sigma2: float) -> np.ndarray:
    """Backpropagated gradient of :func:`cross_entropy_l2` (softmax head)."""
    if shape.output != "softmax":
        raise ShapeError("cross-entropy gradient needs a softmax output layer")
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        return theta / sigma2
    Y = np.asarray(Y, dtype=float)
    layers = shape.unpack(theta)
    acts = [X]
    a = X
    for l, (W, b) in enumerate(layers):
        z = a @ W + b
        a = _softmax_rows(z) if l == len(layers) - 1 else _apply(shape.hidden, z)
        acts.append(a)
    P = acts[-1]
    # d/dz of -sum y log p through the softmax; y rows need not sum to 1.
    # Where p was clamped the log is constant, so its contribution is dropped.
    live = P > LOG_FLOOR
    Yl = np.where(live, Y, 0.0)
    delta = P * Yl.sum(axis=1, keepdims=True) - Yl
    grads = []
    for l in range(len(layers) - 1, -1, -1):
        W, _ = layers[l]
        grads.append((acts[l].T @ delta, delta.sum(axis=0)))
        if l > 0:
            a_prev = acts[l]
            if shape.hidden == "tanh":
                dact = 1.0 - a_prev**2
            elif shape.hidden == "sigmoid":
                dact = a_prev * (1.0 - a_prev)
            elif shape.hidden == "identity":
                dact = 1.0
            else:
                raise ShapeError("softmax hidden layers are not supported")
            delta = (delta @ W.T) * dact
    grads.reverse()
    return shape.pack(grads) + theta / sigma2
