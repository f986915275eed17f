"""Critic ensemble, UCB scoring, running normalization, gated lambda and the lambda-return.

The same :func:`gated_returns` routine scores planner rollouts and builds the
learner's critic/actor targets, so both see identical returns for identical
belief and reward traces.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import Array, Belief, SeedSpec, ValueConfig, derive_stream
from .nn import Adam, Approximator


class CriticEnsemble:
    """``E`` independently initialized value networks over stacked beliefs ``[h; z]``."""

    def __init__(self, members: list[Approximator], lr: float = 3e-4):
        if len(members) < 2:
            raise ValueError("a critic ensemble needs at least two members")
        if len({m.sizes[0] for m in members}) != 1:
            raise ValueError("ensemble members must share their input size")
        self.members = members
        self.lr = lr
        self.optims = [Adam(m.params, lr=lr) for m in members]

    @classmethod
    def create(
        cls,
        in_dim: int,
        E: int,
        seed: SeedSpec | int,
        hidden: tuple[int, ...] = (32, 32),
        lr: float = 3e-4,
        out_scale: float = 1.0,
    ) -> CriticEnsemble:
        members = [Approximator([in_dim, *hidden, 1], derive_stream(seed, "critic-init", i), out_scale) for i in range(E)]
        return cls(members, lr=lr)

    @property
    def E(self) -> int:
        return len(self.members)

    def values(self, x: Array) -> Array:
        """Member outputs ``(E, N)`` for stacked beliefs ``x`` of shape ``(N, d_h + d_z)``."""
        return np.stack([m(x)[..., 0] for m in self.members])

    def copy(self) -> CriticEnsemble:
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            "members": [m.to_dict() for m in self.members],
            "lr": self.lr,
            "optims": [o.state_dict() for o in self.optims],
        }

    @classmethod
    def from_dict(cls, d: dict) -> CriticEnsemble:
        ens = cls([Approximator.from_dict(m) for m in d["members"]], lr=float(d["lr"]))
        for o, s in zip(ens.optims, d.get("optims", [])):
            o.load_state_dict(s)
        return ens


class EnsembleMoments(NamedTuple):
    mu: Array | float
    sigma: Array | float


def moments(values: Array) -> EnsembleMoments:
    """Mean and unbiased (divisor ``E - 1``) standard deviation over axis 0."""
    values = np.asarray(values, dtype=np.float64)
    # offsets from the first member, so identical members give exactly zero spread
    d = values - values[0]
    d_mean = d.mean(axis=0)
    sigma = np.sqrt(np.sum((d - d_mean) ** 2, axis=0) / (values.shape[0] - 1))
    return EnsembleMoments(values[0] + d_mean, sigma)


def ensemble_moments(ens: CriticEnsemble, belief: Belief) -> EnsembleMoments:
    m = moments(ens.values(belief.stacked()[None]))
    return EnsembleMoments(float(m.mu[0]), float(m.sigma[0]))


def ucb(m: EnsembleMoments, beta: float) -> Array | float:
    """Optimistic score ``mu + beta * sigma``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return m.mu + beta * m.sigma


@dataclass
class RunningNormalizer:
    """Exponential-moving z-score of UCB values, mapped affinely from [-3, 3] onto [0, 1].

    The first update adopts the batch statistics directly; later updates mix
    them in with weight ``1 - decay``.
    """

    ema_mean: float = 0.0
    ema_var: float = 1.0
    decay: float = 0.99
    count: int = 0
    eps: float = field(default=1e-8, repr=False)

    def __call__(self, raw: Array | float) -> Array | float:
        zscore = (np.asarray(raw, dtype=np.float64) - self.ema_mean) / np.sqrt(self.ema_var + self.eps)
        out = np.clip((zscore + 3.0) / 6.0, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def update(self, values: Array | float) -> None:
        values = np.asarray(values, dtype=np.float64).ravel()
        values = values[np.isfinite(values)]
        if values.size == 0:
            return
        mean = float(values.mean())
        var = float(values.var()) if values.size > 1 else self.ema_var
        if self.count == 0:
            self.ema_mean, self.ema_var = mean, var
        else:
            d = self.decay
            self.ema_mean = d * self.ema_mean + (1 - d) * mean
            self.ema_var = d * self.ema_var + (1 - d) * var
        self.count += values.size

    def snapshot(self) -> RunningNormalizer:
        return RunningNormalizer(self.ema_mean, self.ema_var, self.decay, self.count, self.eps)

    def to_dict(self) -> dict:
        return {"ema_mean": self.ema_mean, "ema_var": self.ema_var, "decay": self.decay, "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> RunningNormalizer:
        return cls(float(d["ema_mean"]), float(d["ema_var"]), float(d["decay"]), int(d["count"]))


def normalize(n: RunningNormalizer, raw_ucb: Array | float, update: bool = False) -> Array | float:
    """Map raw UCB into [0, 1] with the current statistics, then optionally fold ``raw_ucb`` in."""
    out = n(raw_ucb)
    if update:
        n.update(raw_ucb)
    return out


def lambda_gate(norm_ucb: Array | float, cfg: ValueConfig) -> Array | float:
    """High normalized UCB gives a small lambda (more bootstrapping)."""
    return cfg.lambda_max - (cfg.lambda_max - cfg.lambda_min) * norm_ucb


@dataclass
class ReturnTrace:
    rewards: Array
    mus: Array
    lambdas: Array
    returns: Array


def lambda_returns(rewards: Array, mus: Array, lambdas: Array, gamma: float) -> Array:
    """Backward recursion of the time-varying lambda-return over the last axis.

    ``G[H-1] = mu[H-1]`` and ``G[t] = r[t] + gamma * ((1 - lam[t]) * mu[t+1] + lam[t] * G[t+1])``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    mus = np.asarray(mus, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    H = rewards.shape[-1]
    if H < 1 or mus.shape != rewards.shape or lambdas.shape[-1] != H - 1 or lambdas.shape[:-1] != rewards.shape[:-1]:
        raise ValueError(
            f"need rewards/mus of length H >= 1 and lambdas of length H-1; got {rewards.shape}, {mus.shape}, {lambdas.shape}"
        )
    G = np.empty_like(rewards)
    G[..., H - 1] = mus[..., H - 1]
    for t in range(H - 2, -1, -1):
        lam = lambdas[..., t]
        G[..., t] = rewards[..., t] + gamma * ((1.0 - lam) * mus[..., t + 1] + lam * G[..., t + 1])
    return G


def lambda_return(rewards: Array, mus: Array, lambdas: Array, gamma: float) -> ReturnTrace:
    G = lambda_returns(rewards, mus, lambdas, gamma)
    return ReturnTrace(np.asarray(rewards, float), np.asarray(mus, float), np.asarray(lambdas, float), G)


class GatedReturns(NamedTuple):
    mus: Array  # (..., H)
    sigmas: Array  # (..., H)
    ucb: Array  # (..., H)
    lambdas: Array  # (..., H-1)
    returns: Array  # (..., H)


def gated_returns(
    rewards: Array,
    hs: Array,
    zs: Array,
    critics: CriticEnsemble,
    normalizer: RunningNormalizer,
    cfg: ValueConfig,
) -> GatedReturns:
    """Uncertainty-aware returns for rollouts ``(N, H)`` of beliefs and predicted rewards.

    ``normalizer`` is only read; callers fold the returned UCB values in afterwards.
    """
    N, H = rewards.shape
    x = np.concatenate([hs, zs], axis=-1).reshape(N * H, -1)
    m = moments(critics.values(x))
    mus = m.mu.reshape(N, H)
    sigmas = m.sigma.reshape(N, H)
    scores = mus + cfg.beta * sigmas
    lambdas = lambda_gate(normalizer(scores[:, :-1]), cfg) if H > 1 else np.zeros((N, 0))
    lambdas = np.asarray(lambdas, dtype=np.float64).reshape(N, H - 1)
    G = lambda_returns(rewards, mus, lambdas, cfg.gamma)
    return GatedReturns(mus, sigmas, scores, lambdas, G)
