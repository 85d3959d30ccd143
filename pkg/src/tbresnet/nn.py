"""Dense ReLU network used as the data-driven utility component.

The final layer is affine, so the network output is read directly as one
utility per alternative. Gradients are computed by hand (reverse mode) and
parameters are updated with plain mini-batch SGD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MlpParams:
    """Layer sizes ``[d_in, h_1, ..., K]`` with ``weights[l]`` of shape ``(d_l, d_{l+1})``."""

    layer_dims: list
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.layer_dims) < 2:
            raise ValueError("need at least an input and an output layer")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[l], self.layer_dims[l + 1])
            if np.shape(W) != shape or np.shape(b) != (shape[1],):
                raise ValueError(f"layer {l}: expected W{shape} and b({shape[1]},)")

    @classmethod
    def init(cls, layer_dims, rng: np.random.Generator) -> "MlpParams":
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_dims), weights, biases)

    @classmethod
    def zeros(cls, layer_dims) -> "MlpParams":
        return cls(list(layer_dims), [np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:])],
                   [np.zeros(b) for b in layer_dims[1:]])

    @property
    def arrays(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def with_flat(self, theta) -> "MlpParams":
        theta = np.asarray(theta, dtype=float)
        weights, biases, pos = [], [], 0
        for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            weights.append(theta[pos:pos + a * b].reshape(a, b))
            pos += a * b
            biases.append(theta[pos:pos + b].copy())
            pos += b
        return MlpParams(self.layer_dims, weights, biases)

    def copy(self) -> "MlpParams":
        return MlpParams(list(self.layer_dims), [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        dims = [int(v) for v in d["layer_dims"]]
        weights = [np.asarray(W, dtype=float).reshape(a, b) for W, a, b in zip(d["weights"], dims[:-1], dims[1:])]
        return cls(dims, weights, [np.asarray(b, dtype=float) for b in d["biases"]])


def architecture(d_in: int, n_outputs: int, depth: int, width: int) -> list:
    """Layer sizes for a ``depth``-layer net: ``depth - 1`` hidden ReLU layers of ``width``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return [d_in] + [width] * (depth - 1) + [n_outputs]


def _as_batch(params: MlpParams, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != params.layer_dims[0]:
        raise ValueError(f"input has {X.shape[1]} features, network expects {params.layer_dims[0]}")
    return X, single


def forward_pass(params: MlpParams, X: np.ndarray):
    """Return the output and the list of layer inputs needed for the backward pass."""
    acts = [X]
    h = X
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ W + b
        if l < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Utilities for one input vector (``(d_in,) -> (K,)``) or a batch (``(N, d_in) -> (N, K)``)."""
    X, single = _as_batch(params, x)
    out, _ = forward_pass(params, X)
    return out[0] if single else out


def backward_pass(params: MlpParams, acts, upstream: np.ndarray, need_input: bool = True):
    """Gradients of ``sum(upstream * output)`` given cached activations.

    Returns ``(dW list, db list, dX)``; the ReLU derivative at exactly zero is 0.
    """
    L = len(params.weights)
    dWs, dbs = [None] * L, [None] * L
    g = upstream
    for l in range(L - 1, -1, -1):
        a = acts[l]
        dWs[l] = a.T @ g
        dbs[l] = g.sum(axis=0)
        if l == 0 and not need_input:
            return dWs, dbs, None
        g = g @ params.weights[l].T
        if l > 0:
            g = g * (a > 0)
    return dWs, dbs, g


def mlp_backward(params: MlpParams, x, upstream_grad):
    """Parameter gradients (as an ``MlpParams``) and input gradient of ``upstream . f(x)``.

    For a batch the parameter gradients are summed over rows and the input
    gradient is returned per row.
    """
    X, single = _as_batch(params, x)
    G = np.asarray(upstream_grad, dtype=float).reshape(X.shape[0], -1)
    if G.shape[1] != params.layer_dims[-1]:
        raise ValueError("upstream gradient length does not match network output")
    _, acts = forward_pass(params, X)
    dWs, dbs, dX = backward_pass(params, acts, G)
    grads = MlpParams(params.layer_dims, dWs, dbs)
    return grads, (dX[0] if single else dX)


def input_jacobian(params: MlpParams, X: np.ndarray) -> np.ndarray:
    """``(N, K, d_in)`` derivatives of every output with respect to every input."""
    _, acts = forward_pass(params, X)
    K = params.layer_dims[-1]
    out = np.empty((X.shape[0], K, X.shape[1]))
    for k in range(K):
        G = np.zeros((X.shape[0], K))
        G[:, k] = 1.0
        out[:, k, :] = backward_pass(params, acts, G)[2]
    return out


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    iterations: int = 5000
    batch_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be positive")


def sgd_step(theta, grads, learning_rate: float, iteration: int | None = None):
    """``theta - learning_rate * grads``; refuses non-finite gradients."""
    grads = np.asarray(grads, dtype=float)
    if not np.all(np.isfinite(grads)):
        where = f" at iteration {iteration}" if iteration is not None else ""
        raise FloatingPointError(f"non-finite gradient{where}")
    return np.asarray(theta, dtype=float) - learning_rate * grads


def minibatches(n: int, batch_size: int, iterations: int, rng: np.random.Generator):
    """Yield ``iterations`` index arrays, reshuffling at the start of every epoch."""
    batch_size = min(batch_size, n)
    done = 0
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            if done == iterations:
                return
            yield perm[start:start + batch_size]
            done += 1
