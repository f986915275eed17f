"""Small fixtures shared by several test modules."""

from __future__ import annotations

import numpy as np

from latentmpc.nn import Approximator
from latentmpc.value import CriticEnsemble


def constant_ensemble(values, in_dim=3):
    """Critics whose members output fixed constants everywhere."""
    members = []
    for v in values:
        m = Approximator([in_dim, 4, 1], np.random.default_rng(0))
        m.params[-2][...] = 0.0
        m.params[-1][...] = v
        members.append(m)
    return CriticEnsemble(members)


def linear_ensemble(weights, biases):
    """Critics ``V_i(x) = w_i . x + b_i`` (single linear layer)."""
    members = []
    for w, b in zip(weights, biases):
        m = Approximator([len(w), 1], np.random.default_rng(0))
        m.params[0][...] = np.asarray(w, dtype=np.float64)[:, None]
        m.params[1][...] = b
        members.append(m)
    return CriticEnsemble(members)


class ToyModel:
    """Deterministic 1-D latent model: ``h' = gain * h + a``, reward ``-(h - target)^2``.

    ``z`` is a dummy latent whose prior is a point mass at zero.
    """

    d_h = 1
    d_z = 1
    d_a = 1
    d_o = 1
    model_reward = True

    def __init__(self, target: float = 0.3, gain: float = 0.0):
        self.target = target
        self.gain = gain

    def encode(self, h, o):
        return np.zeros_like(h), np.full(h.shape, 1e-300)

    def transition(self, h, z, a):
        return self.gain * h + a

    def prior(self, h):
        return np.zeros_like(h), np.zeros_like(h)

    def decode(self, h, z):
        return h.copy(), np.ones_like(h)

    def reward(self, h, z):
        return -((h[..., 0] - self.target) ** 2)
