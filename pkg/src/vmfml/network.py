"""Multilayer perceptron with an L2-normalised output layer.

Hidden layers use relu or tanh; the last fully connected layer is linear and
is followed by normalisation onto the unit sphere. Weights are stored as
``(fan_in, fan_out)`` matrices so a batch is propagated as ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .directional import normalize
from .errors import DimensionMismatch, InvalidConfig, StaleCache
from .objective import normalize_backward

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class NetworkConfig:
    layer_widths: tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise InvalidConfig("layer_widths needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise InvalidConfig(f"layer widths must be positive, got {widths}")
        if widths[-1] < 2:
            raise InvalidConfig(f"embedding dimension must be >= 2, got {widths[-1]}")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def embedding_dim(self) -> int:
        return self.layer_widths[-1]


@dataclass
class Network:
    config: NetworkConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "Network":
        return Network(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    preacts: list[np.ndarray]  # x @ W + b for each layer
    shapes: tuple = field(default=())


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float
    velocity: list[np.ndarray]

    @classmethod
    def zeros_like(cls, net: Network, learning_rate: float, momentum: float) -> "OptimizerState":
        if learning_rate <= 0:
            raise InvalidConfig(f"learning rate must be positive, got {learning_rate}")
        if not 0.0 <= momentum < 1.0:
            raise InvalidConfig(f"momentum must be in [0, 1), got {momentum}")
        return cls(learning_rate, momentum, [np.zeros_like(p) for p in net.parameters()])


def init_network(config: NetworkConfig) -> Network:
    """Xavier-uniform weights and zero biases, deterministic per ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(config.layer_widths[:-1], config.layer_widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(config, weights, biases)


def _activate(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    return np.tanh(a)


def _activate_backward(name, a, out, g):
    if name == "relu":
        return g * (a > 0.0)
    return g * (1.0 - out * out)


def forward(net: Network, batch) -> tuple[np.ndarray, ForwardCache]:
    """Embed a batch; returns unit-norm rows and the cache needed by :func:`backward`."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.config.layer_widths[0]:
        raise DimensionMismatch(
            f"batch of shape {x.shape} does not match input width {net.config.layer_widths[0]}"
        )
    inputs, preacts = [], []
    h = x
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        a = h @ w + b
        preacts.append(a)
        h = a if i == last else _activate(net.config.activation, a)
    shapes = tuple(w.shape for w in net.weights)
    return normalize(h), ForwardCache(inputs, preacts, shapes)


def embed(net: Network, features, chunk: int = 4096) -> np.ndarray:
    """Forward a (possibly large) feature matrix in chunks, discarding caches."""
    x = np.asarray(features, dtype=np.float64)
    out = np.empty((x.shape[0], net.config.embedding_dim))
    for start in range(0, x.shape[0], chunk):
        out[start : start + chunk] = forward(net, x[start : start + chunk])[0]
    return out


def backward(net: Network, cache: ForwardCache, grad_embeddings) -> list[np.ndarray]:
    """Parameter gradients ``[dW0, db0, dW1, db1, ...]`` given dL/d(embeddings)."""
    shapes = tuple(w.shape for w in net.weights)
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if cache.shapes != shapes or len(cache.preacts) != net.n_layers:
        raise StaleCache("cache was produced by a network with different shapes")
    z = cache.preacts[-1]
    if g.shape != z.shape:
        raise StaleCache(f"gradient shape {g.shape} does not match cached output {z.shape}")
    delta = normalize_backward(z, g)
    grads: list[np.ndarray] = [None] * (2 * net.n_layers)  # type: ignore[list-item]
    for i in range(net.n_layers - 1, -1, -1):
        grads[2 * i] = cache.inputs[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            upstream = delta @ net.weights[i].T
            delta = _activate_backward(
                net.config.activation, cache.preacts[i - 1], cache.inputs[i], upstream
            )
    return grads


def sgd_step(net: Network, grads, opt: OptimizerState) -> tuple[Network, OptimizerState]:
    """Momentum SGD: ``v <- m v + g``, ``theta <- theta - lr v`` (updates in place)."""
    params = net.parameters()
    if len(grads) != len(params):
        raise DimensionMismatch(f"expected {len(params)} gradient arrays, got {len(grads)}")
    for p, g, v in zip(params, grads, opt.velocity):
        if p.shape != np.shape(g) or v.shape != p.shape:
            raise DimensionMismatch(f"gradient shape {np.shape(g)} vs parameter {p.shape}")
        v *= opt.momentum
        v += g
        p -= opt.learning_rate * v
    return net, opt
