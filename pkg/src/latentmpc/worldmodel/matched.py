"""Latent models built directly from a point-mass environment's geometry.

``h`` is the predicted position relative to the episode start (so the zero
initial memory is exact), ``z`` is the correction applied by the latest
observation, and the believed position is ``start + h + z``. With Gaussian
process and observation noise the encoder is the scalar Kalman update.
"""

from __future__ import annotations

import numpy as np

from ..core import Array
from .envs import _PointEnv


class PointMassModel:
    d_h = 2
    d_z = 2
    d_a = 2
    d_o = 2
    model_reward = True

    def __init__(self, env: _PointEnv, process_noise: float | None = None, obs_noise: float | None = None):
        self.env = env
        self.origin = np.asarray(env.spec.start, dtype=np.float64)
        q = env.spec.process_noise if process_noise is None else process_noise
        r = env.spec.obs_noise if obs_noise is None else obs_noise
        self.q2 = max(q * q, 1e-12)
        self.r2 = max(r * r, 1e-12)

    def position(self, h: Array, z: Array) -> Array:
        # the correction may not carry the believed position through a wall
        base = self.origin + h
        return self.env.project(base, base + z)[0]

    def encode(self, h: Array, o: Array) -> tuple[Array, Array]:
        gain = self.q2 / (self.q2 + self.r2)
        mean = gain * (o - self.origin - h)
        return mean, np.full(mean.shape, self.q2 * self.r2 / (self.q2 + self.r2))

    def transition(self, h: Array, z: Array, a: Array) -> Array:
        new, _ = self.env.move(self.position(h, z), a)
        return new - self.origin

    def prior(self, h: Array) -> tuple[Array, Array]:
        return np.zeros_like(h), np.full(h.shape, self.q2)

    def decode(self, h: Array, z: Array) -> tuple[Array, Array]:
        return self.position(h, z), np.full(h.shape, self.r2)

    def reward(self, h: Array, z: Array) -> Array:
        return self.env.state_reward(self.position(h, z))

    def to_dict(self) -> dict:
        return {"format": "point-mass", "q2": self.q2, "r2": self.r2}
