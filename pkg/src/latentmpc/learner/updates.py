"""Imagined actor-critic updates and world-model fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Array, ValueConfig
from ..nn import Adam
from ..value import CriticEnsemble, GatedReturns, RunningNormalizer, gated_returns
from ..worldmodel.rssm import GaussianRSSM, LatentModel
from .replay import SequenceBatch


@dataclass
class ImaginedBatch:
    """``B`` imagined rollouts of length ``H`` under the current actor and model prior.

    ``xs[:, t]`` is the belief the actor acted from at step ``t`` (the start
    belief for ``t = 0``); ``hs[:, t]``, ``zs[:, t]`` and ``rewards[:, t]``
    describe the belief reached after that action.
    """

    xs: Array  # (B, H, d_h + d_z)
    actions: Array  # (B, H, d_a)
    pre_squash: Array  # (B, H, d_a)
    logps: Array  # (B, H)
    hs: Array  # (B, H, d_h)
    zs: Array  # (B, H, d_z)
    rewards: Array  # (B, H)
    returns: GatedReturns | None = None

    @property
    def targets(self) -> Array:
        return self.returns.returns

    def beliefs_after(self) -> Array:
        return np.concatenate([self.hs, self.zs], axis=-1)


def imagine_rollouts(model: LatentModel, actor, h0: Array, z0: Array, H: int, rng: np.random.Generator) -> ImaginedBatch:
    """Sample actions from ``actor`` and propagate beliefs ``(B, d_h)``, ``(B, d_z)`` through the prior."""
    if H < 1:
        raise ValueError("H must be >= 1")
    B = h0.shape[0]
    d_x = model.d_h + model.d_z
    xs = np.empty((B, H, d_x))
    acts = np.empty((B, H, model.d_a))
    us = np.empty((B, H, model.d_a))
    logps = np.empty((B, H))
    hs = np.empty((B, H, model.d_h))
    zs = np.empty((B, H, model.d_z))
    rewards = np.empty((B, H))
    h, z = h0, z0
    for t in range(H):
        x = np.concatenate([h, z], axis=1)
        a, u, lp = actor.sample(x, rng)
        xs[:, t], acts[:, t], us[:, t], logps[:, t] = x, a, u, lp
        h = model.transition(h, z, a)
        mean, var = model.prior(h)
        z = mean + np.sqrt(var) * rng.standard_normal(mean.shape)
        hs[:, t], zs[:, t] = h, z
        rewards[:, t] = model.reward(h, z)
    return ImaginedBatch(xs, acts, us, logps, hs, zs, rewards)


def attach_returns(batch: ImaginedBatch, critics: CriticEnsemble, normalizer: RunningNormalizer, cfg: ValueConfig) -> ImaginedBatch:
    """Score the batch with the shared gated return (normalizer read only)."""
    batch.returns = gated_returns(batch.rewards, batch.hs, batch.zs, critics, normalizer, cfg)
    return batch


def critic_update(critics: CriticEnsemble, batch: ImaginedBatch, lr: float | None = None) -> float:
    """One squared-error step of every member toward the batch's fixed targets ``G_t``.

    Returns:
        Mean pre-step loss over members.
    """
    x = batch.beliefs_after().reshape(-1, batch.hs.shape[-1] + batch.zs.shape[-1])
    target = np.array(batch.targets, dtype=np.float64).reshape(-1, 1)  # detached copy
    n = x.shape[0]
    losses = []
    for member, optim in zip(critics.members, critics.optims):
        out, acts = member.forward(x, return_cache=True)
        err = out - target
        losses.append(float(np.mean(err**2)))
        grads, _ = member.backward(acts, 2.0 * err / n)
        optim.step(grads, lr=lr)
    loss = float(np.mean(losses))
    if not np.isfinite(loss):
        raise FloatingPointError("critic loss is not finite")
    return loss


def actor_update(actor, batch: ImaginedBatch, lr: float | None = None, entropy_coef: float = 3e-4) -> float:
    """Likelihood-ratio ascent on ``mean_t log pi(a_t|x_t) (G_t - b_t)`` plus an entropy bonus.

    The baseline ``b_t`` is the batch mean of ``G_t`` at each depth.

    Returns:
        The objective estimate before the step.
    """
    G = batch.targets
    adv = G - G.mean(axis=0, keepdims=True)
    B, H = adv.shape
    x = batch.xs.reshape(B * H, -1)
    u = batch.pre_squash.reshape(B * H, -1)
    value, grads = actor.logp_grad(x, u, adv.reshape(-1) / (B * H))
    ent_grads = actor.entropy_grad()
    objective = value + entropy_coef * actor.entropy()
    if not np.isfinite(objective):
        raise FloatingPointError("actor objective is not finite")
    total = [g + entropy_coef * e for g, e in zip(grads, ent_grads)]
    actor.optim.step(total, lr=lr, ascent=True)
    return float(objective)


class ModelTrainer:
    """Adam ascent on the reparameterized ELBO of a :class:`GaussianRSSM`."""

    def __init__(self, model: GaussianRSSM, lr: float = 1e-3, clip: float = 100.0):
        self.model = model
        self.lr = lr
        self.clip = clip
        self.optim = Adam(model.param_list(), lr=lr)

    def step(self, batch: SequenceBatch, rng: np.random.Generator) -> float:
        return model_update(self.model, batch, self.optim, rng, clip=self.clip)


def model_update(model: GaussianRSSM, batch: SequenceBatch, optim: Adam, rng: np.random.Generator, clip: float | None = 100.0) -> float:
    """One ascent step on the batch-mean ELBO; returns the pre-step per-sequence mean."""
    eps = rng.standard_normal(batch.obs.shape[:2] + (model.d_z,))
    vals, kls, grads = model.elbo_terms(batch.obs, batch.mask, batch.actions, batch.rewards, eps, grad=True)
    value = float(vals.mean())
    if not np.isfinite(value):
        raise FloatingPointError("ELBO is not finite")
    optim.step(grads, ascent=True, clip=clip)
    return value
