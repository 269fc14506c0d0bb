"""Multi-output MLP with hand-written reverse-mode gradients.

The network maps a normalized lookback of length L to all H horizon steps at
once (direct multi-horizon output, no recursive feeding). Parameters travel
as one flat vector so optimizers and the meta-learner can treat the model as
a point in parameter space.
"""

from __future__ import annotations

import copy

import numpy as np

from ..rng import DeterministicRng
from .base import Forecaster

_ACTIVATIONS = ("relu", "tanh")


class MlpModel(Forecaster):
    """Fully connected network: affine-activation hidden layers, affine head."""

    name = "mlp"
    input_scale = "normalized"
    family = "deep"

    def __init__(self, layer_sizes: list[int], activation: str, weights, biases):
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ValueError(f"invalid layer sizes {layer_sizes}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}, got {activation!r}")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (layer_sizes[i], layer_sizes[i + 1]) or b.shape != (layer_sizes[i + 1],):
                raise ValueError(f"layer {i} parameter shapes disagree with {layer_sizes}")
        self.layer_sizes = list(layer_sizes)
        self.activation = activation
        self.weights = list(weights)
        self.biases = list(biases)

    # -- parameter vector ---------------------------------------------------

    def get_params(self) -> np.ndarray:
        """All weights and biases, flattened layer by layer."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape)
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def clone(self) -> "MlpModel":
        return copy.deepcopy(self)

    # -- forward / backward -------------------------------------------------

    def _act(self, z: np.ndarray) -> np.ndarray:
        return np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)

    def _act_grad(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        return (z > 0).astype(float) if self.activation == "relu" else 1.0 - a * a

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Map a (B, L) batch to (B, H) outputs."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"expected input shape (B, {self.layer_sizes[0]}), got {x.shape}")
        a = x
        for i in range(len(self.weights) - 1):
            a = self._act(a @ self.weights[i] + self.biases[i])
        return a @ self.weights[-1] + self.biases[-1]

    def loss_and_gradients(self, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean squared error over all B*H entries, and its gradient as a
        flat vector aligned with get_params()."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"expected input shape (B, {self.layer_sizes[0]}), got {x.shape}")
        if y.shape != (x.shape[0], self.layer_sizes[-1]):
            raise ValueError(f"expected target shape ({x.shape[0]}, {self.layer_sizes[-1]}), got {y.shape}")

        # forward with caches
        activations = [x]
        pre = []
        a = x
        for i in range(len(self.weights) - 1):
            z = a @ self.weights[i] + self.biases[i]
            a = self._act(z)
            pre.append(z)
            activations.append(a)
        out = a @ self.weights[-1] + self.biases[-1]

        err = out - y
        loss = float(np.mean(err * err))

        # backward
        grad_w = [np.zeros_like(w) for w in self.weights]
        grad_b = [np.zeros_like(b) for b in self.biases]
        delta = 2.0 * err / err.size
        grad_w[-1] = activations[-1].T @ delta
        grad_b[-1] = delta.sum(axis=0)
        upstream = delta @ self.weights[-1].T
        for i in range(len(self.weights) - 2, -1, -1):
            dz = upstream * self._act_grad(pre[i], activations[i + 1])
            grad_w[i] = activations[i].T @ dz
            grad_b[i] = dz.sum(axis=0)
            if i > 0:
                upstream = dz @ self.weights[i].T

        flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grad_w, grad_b)])
        return loss, flat

    # -- forecaster interface -----------------------------------------------

    def predict(self, lookback, horizon, stats=None):
        lookback = np.asarray(lookback, dtype=float)
        if lookback.shape != (self.layer_sizes[0],):
            raise ValueError(f"lookback must have length {self.layer_sizes[0]}, got {lookback.shape}")
        if horizon != self.layer_sizes[-1]:
            raise ValueError(f"model outputs {self.layer_sizes[-1]} steps, {horizon} requested")
        return self.forward(lookback[None, :])[0]


def mlp_init(layer_sizes: list[int], activation: str = "relu", seed: int = 0) -> MlpModel:
    """Seeded scaled-uniform init: W ~ U[-1, 1] / sqrt(fan_in), biases zero."""
    if len(layer_sizes) < 2 or min(layer_sizes) < 1:
        raise ValueError(f"invalid layer sizes {layer_sizes}")
    rng = DeterministicRng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        u = rng.uniforms(fan_in * fan_out).reshape(fan_in, fan_out)
        weights.append((2.0 * u - 1.0) * scale)
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes, activation, weights, biases)


class Sgd:
    """Plain gradient descent on a flat parameter vector."""

    def __init__(self, lr: float):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.lr = lr

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        return params - self.lr * grads


class Adam:
    """Adam with the standard defaults (b1=0.9, b2=0.999, eps=1e-8)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: np.ndarray | None = None
        self._v: np.ndarray | None = None
        self._t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if self._m is None:
            self._m = np.zeros_like(params)
            self._v = np.zeros_like(params)
        if grads.shape != params.shape:
            raise ValueError("gradient shape must match parameters")
        self._t += 1
        self._m = self.beta1 * self._m + (1.0 - self.beta1) * grads
        self._v = self.beta2 * self._v + (1.0 - self.beta2) * grads * grads
        m_hat = self._m / (1.0 - self.beta1**self._t)
        v_hat = self._v / (1.0 - self.beta2**self._t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
