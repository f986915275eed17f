"""Stochastic actor priors over bounded actions."""

from __future__ import annotations

import copy

import numpy as np

from ..core import ActionBounds, Array, SeedSpec, derive_stream
from ..nn import Adam, Approximator

LOG_2PI = float(np.log(2 * np.pi))


def _log1m_tanh2(u: Array) -> Array:
    # log(1 - tanh(u)^2), stable for large |u|
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


class GaussianActor:
    """Tanh-squashed Gaussian policy over beliefs ``[h; z]``.

    The pre-squash standard deviation is ``min_std + exp(log_std)`` with
    ``min_std`` a fixed fraction of the action range, so sampled actions are
    never fully deterministic.
    """

    def __init__(
        self,
        in_dim: int,
        bounds: ActionBounds,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (32, 32),
        init_std: float = 0.6,
        noise_floor: float = 0.05,
        lr: float = 3e-4,
    ):
        self.bounds = bounds
        self.d_a = bounds.dim
        self.net = Approximator([in_dim, *hidden, self.d_a], rng, out_scale=0.1)
        self.min_std = noise_floor * bounds.span
        self.log_std = np.log(np.maximum(init_std - self.min_std, 1e-6))
        self.lr = lr
        self.optim = Adam(self.params, lr=lr)

    @classmethod
    def create(cls, in_dim: int, bounds: ActionBounds, seed: SeedSpec | int, **kwargs) -> GaussianActor:
        return cls(in_dim, bounds, derive_stream(seed, "actor-init"), **kwargs)

    @property
    def params(self) -> list[Array]:
        return self.net.params + [self.log_std]

    @property
    def std(self) -> Array:
        return self.min_std + np.exp(self.log_std)

    def squash(self, u: Array) -> Array:
        return self.bounds.low + self.bounds.span * (np.tanh(u) + 1.0) / 2.0

    def mean_action(self, x: Array) -> Array:
        return self.squash(self.net(x))

    def log_prob(self, x: Array, u: Array) -> Array:
        """Log-density of the squashed action produced by pre-squash sample ``u``."""
        mean = self.net(x)
        s = self.std
        base = -0.5 * (LOG_2PI + 2 * np.log(s) + ((u - mean) / s) ** 2)
        jac = np.log(self.bounds.span / 2.0) + _log1m_tanh2(u)
        return np.sum(base - jac, axis=-1)

    def sample(self, x: Array, rng: np.random.Generator) -> tuple[Array, Array, Array]:
        """Returns ``(action, pre_squash, log_prob)`` for a batch of beliefs."""
        x = np.atleast_2d(x)
        mean = self.net(x)
        u = mean + self.std * rng.standard_normal(mean.shape)
        return self.squash(u), u, self.log_prob(x, u)

    def logp_grad(self, x: Array, u: Array, weights: Array) -> tuple[float, list[Array]]:
        """Value and gradient of ``sum_i weights_i * log pi(u_i | x_i)``."""
        mean, acts = self.net.forward(x, return_cache=True)
        s = self.std
        diff = u - mean
        w = np.asarray(weights, dtype=np.float64)[:, None]
        base = -0.5 * (LOG_2PI + 2 * np.log(s) + (diff / s) ** 2)
        jac = np.log(self.bounds.span / 2.0) + _log1m_tanh2(u)
        value = float(np.sum(w * (base - jac)))
        g_mean = w * diff / s**2
        g_net, _ = self.net.backward(acts, g_mean)
        g_s = np.sum(w * (-1.0 / s + diff**2 / s**3), axis=0)
        g_ls = g_s * np.exp(self.log_std)
        return value, g_net + [g_ls]

    def entropy(self) -> float:
        """Entropy of the pre-squash Gaussian (state independent)."""
        return float(np.sum(0.5 * (LOG_2PI + 1.0) + np.log(self.std)))

    def entropy_grad(self) -> list[Array]:
        return [np.zeros_like(p) for p in self.net.params] + [np.exp(self.log_std) / self.std]

    def copy(self) -> GaussianActor:
        new = copy.deepcopy(self)
        return new

    def to_dict(self) -> dict:
        return {
            "kind": "gaussian",
            "net": self.net.to_dict(),
            "log_std": self.log_std.tolist(),
            "min_std": self.min_std.tolist(),
            "low": self.bounds.low.tolist(),
            "high": self.bounds.high.tolist(),
            "lr": self.lr,
            "optim": self.optim.state_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> GaussianActor:
        new = object.__new__(cls)
        new.bounds = ActionBounds(np.asarray(d["low"]), np.asarray(d["high"]))
        new.d_a = new.bounds.dim
        new.net = Approximator.from_dict(d["net"])
        new.log_std = np.asarray(d["log_std"], dtype=np.float64)
        new.min_std = np.asarray(d["min_std"], dtype=np.float64)
        new.lr = float(d["lr"])
        new.optim = Adam(new.params, lr=new.lr)
        new.optim.load_state_dict(d["optim"])
        return new


class UniformActor:
    """Uniform random actions within bounds; ignores the belief."""

    def __init__(self, bounds: ActionBounds):
        self.bounds = bounds
        self.d_a = bounds.dim

    def sample(self, x: Array, rng: np.random.Generator) -> tuple[Array, Array, Array]:
        n = np.atleast_2d(x).shape[0]
        a = self.bounds.low + self.bounds.span * rng.random((n, self.d_a))
        logp = np.full(n, -np.sum(np.log(self.bounds.span)))
        return a, a.copy(), logp

    def mean_action(self, x: Array) -> Array:
        n = np.atleast_2d(x).shape[0]
        return np.tile((self.bounds.low + self.bounds.high) / 2.0, (n, 1))
