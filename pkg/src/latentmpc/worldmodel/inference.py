"""Filtering, prior rollouts, Monte-Carlo ELBO and the exact linear-Gaussian evidence."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..core import Array, Belief
from .rssm import LatentModel, LinearGaussianRSSM, gauss_logpdf, kl_diag


@dataclass
class LatentTrajectory:
    """Beliefs reached after each action of an imagined rollout, and their predicted rewards."""

    hs: Array  # (H, d_h)
    zs: Array  # (H, d_z)
    rewards: Array  # (H,)

    @property
    def beliefs(self) -> list[Belief]:
        return [Belief(h, z) for h, z in zip(self.hs, self.zs)]

    def __len__(self) -> int:
        return len(self.rewards)


def _check_var(var: Array, what: str) -> None:
    if np.any(~(np.asarray(var) > 0)):
        raise ValueError(f"{what} variance must be strictly positive")


def filter_step(model: LatentModel, h: Array, o: Array | None, rng: np.random.Generator) -> tuple[Array, Array, Array]:
    """Sample ``z`` for one memory state: from the posterior if ``o`` is present, else the prior.

    Returns:
        ``(z, mean, var)`` of the distribution that was sampled.
    """
    h2 = np.asarray(h, dtype=np.float64)[None]
    if o is None:
        mean, var = model.prior(h2)
    else:
        o = np.asarray(o, dtype=np.float64).reshape(-1)
        if o.shape[0] != model.d_o:
            raise ValueError(f"observation has dimension {o.shape[0]}, model expects {model.d_o}")
        mean, var = model.encode(h2, o[None])
    _check_var(var, "latent")
    z = mean[0] + np.sqrt(var[0]) * rng.standard_normal(model.d_z)
    return z, mean[0], np.array(var[0])


def posterior_filter(
    model: LatentModel,
    observations: Sequence[Array | None],
    actions: Sequence[Array] | Array,
    rng: np.random.Generator,
) -> list[Belief]:
    """Filtered beliefs for ``T+1`` observations (``None`` = missing) and ``T`` actions.

    The memory starts at zero; missing observations fall back to the prior.
    """
    actions = np.asarray(actions, dtype=np.float64).reshape(-1, model.d_a) if len(actions) else np.zeros((0, model.d_a))
    if len(observations) != len(actions) + 1:
        raise ValueError(f"need len(observations) == len(actions) + 1, got {len(observations)} and {len(actions)}")
    h = np.zeros(model.d_h)
    beliefs = []
    for t, o in enumerate(observations):
        z, _, _ = filter_step(model, h, o, rng)
        beliefs.append(Belief(h, z))
        if t < len(actions):
            h = model.transition(h[None], z[None], actions[t][None])[0]
    return beliefs


def prior_rollout_batch(model: LatentModel, h: Array, z: Array, actions: Array, eps: Array) -> tuple[Array, Array, Array]:
    """Roll ``N`` beliefs through the prior for ``H`` steps.

    Args:
        h, z: start beliefs ``(N, d_h)``, ``(N, d_z)``.
        actions: ``(N, H, d_a)``.
        eps: ``(N, H, d_z)`` standard-normal draws for the prior samples.

    Returns:
        ``hs (N, H, d_h)``, ``zs (N, H, d_z)``, ``rewards (N, H)`` where index
        ``t`` is the belief reached after action ``t``.
    """
    N, H, _ = actions.shape
    hs = np.empty((N, H, model.d_h))
    zs = np.empty((N, H, model.d_z))
    rewards = np.empty((N, H))
    for t in range(H):
        h = model.transition(h, z, actions[:, t])
        mean, var = model.prior(h)
        z = mean + np.sqrt(var) * eps[:, t]
        hs[:, t], zs[:, t] = h, z
        rewards[:, t] = model.reward(h, z)
    return hs, zs, rewards


def prior_rollout(model: LatentModel, start: Belief, actions: Array, rng: np.random.Generator) -> LatentTrajectory:
    """Imagine ``H = len(actions)`` steps from ``start`` using prior transitions."""
    actions = np.asarray(actions, dtype=np.float64).reshape(-1, model.d_a)
    eps = rng.standard_normal((1, len(actions), model.d_z))
    hs, zs, rewards = prior_rollout_batch(model, start.h[None], start.z[None], actions[None], eps)
    return LatentTrajectory(hs[0], zs[0], rewards[0])


class ElboEstimate(NamedTuple):
    value: float
    stderr: float
    kl: Array  # mean KL per step, (T+1,)


def elbo(
    model: LatentModel,
    observations: Sequence[Array | None],
    actions: Array,
    rng: np.random.Generator,
    rewards: Array | None = None,
    n_samples: int = 16,
) -> ElboEstimate:
    """Monte-Carlo ELBO with analytic KL terms.

    Reconstruction and reward log-likelihoods are averaged over ``n_samples``
    independent filtered trajectories; the standard error is over those samples.
    The reward channel is included when ``rewards`` is given (unit variance).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    actions = np.asarray(actions, dtype=np.float64).reshape(-1, model.d_a)
    if len(observations) != len(actions) + 1:
        raise ValueError("observations and actions are misaligned")
    use_r = rewards is not None and getattr(model, "model_reward", True)
    S = n_samples
    h = np.zeros((S, model.d_h))
    vals = np.zeros(S)
    kls = np.zeros(len(observations))
    eps = rng.standard_normal((len(observations), S, model.d_z))
    for t, o in enumerate(observations):
        pm, pv = model.prior(h)
        _check_var(pv, "prior")
        if o is None:
            z = pm + np.sqrt(pv) * eps[t]
        else:
            o = np.asarray(o, dtype=np.float64).reshape(1, -1)
            em, ev = model.encode(h, np.broadcast_to(o, (S, o.shape[1])))
            _check_var(ev, "posterior")
            z = em + np.sqrt(ev) * eps[t]
            dm, dv = model.decode(h, z)
            _check_var(dv, "observation")
            kl = kl_diag(em, ev, pm, pv)
            kls[t] = kl.mean()
            vals += gauss_logpdf(o, dm, dv).sum(-1) - kl
        if use_r:
            vals += gauss_logpdf(float(rewards[t]), model.reward(h, z), 1.0)
        if t < len(actions):
            h = model.transition(h, z, np.broadcast_to(actions[t], (S, model.d_a)))
    se = float(vals.std(ddof=1) / np.sqrt(S)) if S > 1 else float("nan")
    return ElboEstimate(float(vals.mean()), se, kls)


def exact_evidence(
    model: LinearGaussianRSSM,
    observations: Sequence[Array | None],
    actions: Array,
    rewards: Array | None = None,
) -> float:
    """Exact ``log p(o_{0:T}, r_{0:T} | a)`` for the linear-Gaussian family.

    Every latent is an affine function of the stacked prior innovations, so
    observations and rewards are jointly Gaussian; the evidence is that joint
    density evaluated at the data. Missing observations are marginalized out.
    """
    p = model.p
    d_h, d_z = model.d_h, model.d_z
    actions = np.asarray(actions, dtype=np.float64).reshape(-1, model.d_a)
    T1 = len(observations)
    if T1 != len(actions) + 1:
        raise ValueError("observations and actions are misaligned")
    use_r = rewards is not None and model.model_reward
    n = T1 * d_z
    Dh, Dz = p["D"][:, :d_h], p["D"][:, d_h:]
    rh, rz = p["rw"][:d_h], p["rw"][d_h:]
    hc = np.zeros(d_h)
    Hm = np.zeros((d_h, n))
    means, rows, noise, ys = [], [], [], []
    obs_var = np.exp(p["obs_logvar"])
    for t, o in enumerate(observations):
        sel = np.zeros((d_z, n))
        sel[:, t * d_z : (t + 1) * d_z] = np.eye(d_z)
        zc = p["W"] @ hc + p["w0"]
        Zm = p["W"] @ Hm + sel
        if o is not None:
            means.append(Dh @ hc + Dz @ zc + p["d0"])
            rows.append(Dh @ Hm + Dz @ Zm)
            noise.append(obs_var)
            ys.append(np.asarray(o, dtype=np.float64).reshape(-1))
        if use_r:
            means.append(np.atleast_1d(rh @ hc + rz @ zc + p["rb"][0]))
            rows.append((rh @ Hm + rz @ Zm)[None])
            noise.append(np.ones(1))
            ys.append(np.atleast_1d(float(rewards[t])))
        if t < len(actions):
            hc = p["A"] @ hc + p["B"] @ zc + p["C"] @ actions[t] + p["b"]
            Hm = p["A"] @ Hm + p["B"] @ Zm
    if not ys:
        return 0.0
    mu = np.concatenate(means)
    G = np.vstack(rows)
    y = np.concatenate(ys)
    P = np.tile(model.prior_var, T1)
    cov = (G * P) @ G.T + np.diag(np.concatenate(noise))
    try:
        Lc = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("joint covariance is singular") from exc
    r = np.linalg.solve(Lc, y - mu)
    return float(-0.5 * (len(y) * np.log(2 * np.pi) + r @ r) - np.sum(np.log(np.diag(Lc))))


def filter_batch(model: LatentModel, obs: Array, mask: Array, actions: Array, eps: Array) -> tuple[Array, Array]:
    """Batched :func:`posterior_filter` over ``N`` aligned sequences.

    Args:
        obs: ``(N, T+1, d_o)``; entries where ``mask`` is False are ignored.
        mask: ``(N, T+1)`` True where the observation is present.
        actions: ``(N, T, d_a)``.
        eps: ``(N, T+1, d_z)`` standard-normal draws for the latent samples.

    Returns:
        ``hs (N, T+1, d_h)`` and ``zs (N, T+1, d_z)``.
    """
    N, T1, _ = obs.shape
    h = np.zeros((N, model.d_h))
    hs = np.empty((N, T1, model.d_h))
    zs = np.empty((N, T1, model.d_z))
    for t in range(T1):
        pm, pv = model.prior(h)
        em, ev = model.encode(h, np.where(mask[:, t, None], obs[:, t], 0.0))
        m = mask[:, t, None]
        z = np.where(m, em + np.sqrt(ev) * eps[:, t], pm + np.sqrt(pv) * eps[:, t])
        hs[:, t], zs[:, t] = h, z
        if t < T1 - 1:
            h = model.transition(h, z, actions[:, t])
    return hs, zs
