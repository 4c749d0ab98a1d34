"""Dense feed-forward networks with hand-written backpropagation, plus Adam."""

from __future__ import annotations

from typing import Sequence

import numpy as np


class MLP:
    """ReLU multilayer perceptron with a linear or tanh output layer.

    Parameters are kept as a flat list ``[W0, b0, W1, b1, ...]`` with
    ``W`` of shape ``(fan_in, fan_out)``, so a forward pass is
    ``x @ W + b`` on row-major batches.
    """

    def __init__(self, sizes: Sequence[int], output: str = "linear",
                 rng: np.random.Generator | None = None):
        if output not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        rng = rng or np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.sizes = self.sizes
        other.output = self.output
        other.params = [p.copy() for p in self.params]
        return other

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Return the output and the activations needed by :meth:`backward`."""
        cache = [x]
        h = x
        for layer in range(self.n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = h @ w + b
            if layer < self.n_layers - 1:
                h = np.maximum(z, 0.0)
            elif self.output == "tanh":
                h = np.tanh(z)
            else:
                h = z
            cache.append(h)
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of a scalar loss w.r.t. parameters and the input.

        ``grad_out`` is d(loss)/d(output) for the batch used in ``forward``.
        """
        grads: list[np.ndarray] = [None] * len(self.params)
        delta = grad_out
        if self.output == "tanh":
            delta = delta * (1.0 - cache[-1] ** 2)
        for layer in reversed(range(self.n_layers)):
            h_in = cache[layer]
            grads[2 * layer] = h_in.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            delta = delta @ self.params[2 * layer].T
            if layer > 0:
                delta = delta * (cache[layer] > 0.0)
        return grads, delta

    def soft_update(self, source: "MLP", polyak: float) -> None:
        """``self <- polyak * self + (1 - polyak) * source``."""
        for mine, theirs in zip(self.params, source.params):
            mine *= polyak
            mine += (1.0 - polyak) * theirs


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        corr1 = 1.0 - self.beta1 ** self.t
        corr2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
