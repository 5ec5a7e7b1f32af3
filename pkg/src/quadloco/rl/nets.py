"""Small dense networks with hand-written backprop and Adam.

The policy and value heads are fixed-shape two-hidden-layer
perceptrons; at this size explicit numpy forward/backward passes are
simpler to audit than an autodiff dependency.
"""

from __future__ import annotations

import math

import numpy as np


def orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal weight init (SVD of a Gaussian draw), scaled by gain."""
    a = rng.standard_normal((rows, cols))
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    q = u if u.shape == (rows, cols) else vt
    return gain * q


class MLP:
    """tanh-hidden perceptron: sizes[0] -> ... -> sizes[-1], linear output.

    Parameters live in ``weights``/``biases`` lists; forward returns a
    cache that backward consumes to produce matching gradient lists.
    """

    def __init__(self, sizes: tuple[int, ...], out_gain: float, rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        last = len(sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == last else math.sqrt(2.0)
            self.weights.append(orthogonal(n_in, n_out, gain, rng))
            self.biases.append(np.zeros(n_out))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """x: (batch, in). Returns (out, cache of layer inputs)."""
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h)
            cache.append(h)
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self, cache: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a scalar loss given d(loss)/d(out).

        Returns (weight grads, bias grads) shaped like the parameters.
        """
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                # cache[i+1] holds the tanh output of this layer
                g = g * (1.0 - cache[i + 1] ** 2)
            gw[i] = cache[i].T @ g
            gb[i] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i].T
        return gw, gb

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "MLP":
        dup = object.__new__(MLP)
        dup.sizes = self.sizes
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup


def flatten_arrays(arrays: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays])


def unflatten_into(arrays: list[np.ndarray], flat: np.ndarray) -> None:
    """Write a flat vector back into the array list, in place."""
    pos = 0
    for a in arrays:
        n = a.size
        a[...] = flat[pos:pos + n].reshape(a.shape)
        pos += n
    if pos != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, parameters need {pos}")


class Adam:
    """Adam with optional global gradient-norm clipping."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 max_grad_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        if self.max_grad_norm is not None:
            total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if total > self.max_grad_norm:
                scale = self.max_grad_norm / total
                grads = [g * scale for g in grads]
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
