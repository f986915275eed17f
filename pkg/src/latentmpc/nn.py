"""Small numpy MLPs with hand-written backward passes, and an Adam optimizer."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import Array


class Approximator:
    """Fully connected tanh network with a linear output layer.

    Args:
        sizes: layer widths ``[in, hidden..., out]``.
        rng: generator used for the initial weights.
        out_scale: multiplier on the initial output-layer weights.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.params: list[Array] = []
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = 1.0 / np.sqrt(fan_in)
            if i == n_layers - 1:
                scale *= out_scale
            self.params.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: Array, return_cache: bool = False):
        x = np.asarray(x, dtype=np.float64)
        acts = [x]
        out = x
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            out = out @ W + b
            if i < self.n_layers - 1:
                out = np.tanh(out)
            acts.append(out)
        if return_cache:
            return out, acts
        return out

    __call__ = forward

    def backward(self, acts: list[Array], grad_out: Array) -> tuple[list[Array], Array]:
        """Backpropagate ``grad_out`` (dL/d output) through a cached forward pass.

        Returns:
            Gradients for every entry of ``params`` and dL/d input.
        """
        grads: list[Array] = [np.empty(0)] * len(self.params)
        g = np.asarray(grad_out, dtype=np.float64)
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            W = self.params[2 * i]
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ W.T
        return grads, g

    def get_flat(self) -> Array:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: Array) -> None:
        i = 0
        for p in self.params:
            n = p.size
            p[...] = flat[i : i + n].reshape(p.shape)
            i += n

    def copy(self) -> Approximator:
        new = object.__new__(Approximator)
        new.sizes = list(self.sizes)
        new.params = [p.copy() for p in self.params]
        return new

    def to_dict(self) -> dict:
        return {"sizes": self.sizes, "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, d: dict) -> Approximator:
        new = object.__new__(cls)
        new.sizes = [int(s) for s in d["sizes"]]
        new.params = [np.asarray(p, dtype=np.float64) for p in d["params"]]
        return new


class Adam:
    """Adam over a fixed list of arrays, updated in place.

    ``step`` descends; pass ``ascent=True`` to climb the objective instead.
    """

    def __init__(self, params: list[Array], lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[Array], lr: float | None = None, ascent: bool = False, clip: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        if clip is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > clip:
                grads = [g * (clip / norm) for g in grads]
        self.t += 1
        sign = 1.0 if ascent else -1.0
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p += sign * lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [x.tolist() for x in self.m], "v": [x.tolist() for x in self.v]}

    def load_state_dict(self, d: dict) -> None:
        self.t = int(d["t"])
        for dst, src in zip(self.m, d["m"]):
            dst[...] = np.asarray(src)
        for dst, src in zip(self.v, d["v"]):
            dst[...] = np.asarray(src)
