"""Minimal dense networks with hand-written backprop and Adam.

Everything is float64 numpy; forward passes are pure functions of inputs
and parameters, and every gradient here is checkable against central
finite differences.
"""

from __future__ import annotations

import math

import numpy as np

_ACTIVATIONS = ("relu", "tanh", "linear")


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(float)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


class Mlp:
    """Fully connected stack; layer i maps sizes[i] -> sizes[i+1]."""

    def __init__(self, sizes, activations, rng: np.random.Generator):
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.sizes = list(sizes)
        self.activations = list(activations)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    def rescale_output_layer(self, bound: float, rng: np.random.Generator):
        """Re-draw the final layer near zero (stabilizes early policy/value outputs)."""
        self.weights[-1] = rng.uniform(-bound, bound, size=self.weights[-1].shape)
        self.biases[-1] = rng.uniform(-bound, bound, size=self.biases[-1].shape)

    def forward(self, x: np.ndarray, with_cache: bool = False):
        """x is (batch, sizes[0]); returns (batch, sizes[-1]) and optionally a cache."""
        a = x
        cache = [(None, x)]
        for w, b, kind in zip(self.weights, self.biases, self.activations):
            z = a @ w + b
            a = _act(z, kind)
            if with_cache:
                cache.append((z, a))
        if with_cache:
            return a, cache
        return a

    def backward(self, cache, grad_out: np.ndarray):
        """Backprop grad_out (batch, sizes[-1]) through the cached forward pass.

        Returns (weight_grads, bias_grads, grad_input); grads sum over the batch.
        """
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        delta = grad_out
        for layer in range(len(self.weights) - 1, -1, -1):
            z, a = cache[layer + 1]
            delta = delta * _act_grad(z, a, self.activations[layer])
            a_prev = cache[layer][1]
            grad_w[layer] = a_prev.T @ delta
            grad_b[layer] = delta.sum(axis=0)
            delta = delta @ self.weights[layer].T
        return grad_w, grad_b, delta

    # ---------- parameter plumbing ----------

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy_from(self, other: "Mlp"):
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs

    def clone(self) -> "Mlp":
        dup = Mlp.__new__(Mlp)
        dup.sizes = list(self.sizes)
        dup.activations = list(self.activations)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup


class CriticNet:
    """Q network: state trunk, action concatenated at the first hidden layer."""

    def __init__(self, state_dim: int, action_dim: int, hidden, rng: np.random.Generator):
        h1, h2 = hidden
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.trunk = Mlp([state_dim, h1], ["relu"], rng)
        self.head = Mlp([h1 + action_dim, h2, 1], ["relu", "linear"], rng)

    def forward(self, s: np.ndarray, a: np.ndarray, with_cache: bool = False):
        """Returns q of shape (batch,)."""
        if with_cache:
            t, t_cache = self.trunk.forward(s, with_cache=True)
            joint = np.concatenate([t, a], axis=1)
            q, h_cache = self.head.forward(joint, with_cache=True)
            return q[:, 0], (t_cache, h_cache)
        t = self.trunk.forward(s)
        joint = np.concatenate([t, a], axis=1)
        return self.head.forward(joint)[:, 0]

    def backward(self, cache, grad_q: np.ndarray):
        """grad_q is (batch,); returns (grads aligned with parameters(), grad_action)."""
        t_cache, h_cache = cache
        gw_head, gb_head, grad_joint = self.head.backward(h_cache, grad_q[:, None])
        h1 = self.trunk.sizes[-1]
        grad_t = grad_joint[:, :h1]
        grad_a = grad_joint[:, h1:]
        gw_trunk, gb_trunk, _ = self.trunk.backward(t_cache, grad_t)
        grads = []
        for w, b in zip(gw_trunk, gb_trunk):
            grads.append(w)
            grads.append(b)
        for w, b in zip(gw_head, gb_head):
            grads.append(w)
            grads.append(b)
        return grads, grad_a

    def parameters(self) -> list[np.ndarray]:
        return self.trunk.parameters() + self.head.parameters()

    def copy_from(self, other: "CriticNet"):
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs

    def clone(self) -> "CriticNet":
        dup = CriticNet.__new__(CriticNet)
        dup.state_dim = self.state_dim
        dup.action_dim = self.action_dim
        dup.trunk = self.trunk.clone()
        dup.head = self.head.clone()
        return dup

    def rescale_output_layer(self, bound: float, rng: np.random.Generator):
        self.head.rescale_output_layer(bound, rng)


class Adam:
    """Adam over a fixed list of parameter arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def soft_update(target, online, tau: float):
    """target <- tau * online + (1 - tau) * target, parameter-wise."""
    for t_arr, o_arr in zip(target.parameters(), online.parameters()):
        t_arr *= 1.0 - tau
        t_arr += tau * o_arr


def clip_gradients(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale the whole gradient list so its global norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def flatten_params(params: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])


def unflatten_into(params: list[np.ndarray], vec: np.ndarray):
    i = 0
    for p in params:
        p[...] = vec[i:i + p.size].reshape(p.shape)
        i += p.size
    if i != vec.size:
        raise ValueError("vector length does not match parameter count")
