"""Mixture-of-Gaussians MPPI over latent imagination.

Each of ``M`` modes keeps a time-indexed diagonal Gaussian over action
sequences. Every iteration samples ``K`` candidates per mode, scores them with
the uncertainty-aware return, normalizes all scores against the best score over
every mode, and refits each mode by weighted moment matching on its own
candidates only. The executed action is the first mean action of the mode that
produced the best rollout.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import ActionBounds, Array, Belief, PlannerConfig, StreamKey, ValueConfig, clip_actions
from .value import CriticEnsemble, GatedReturns, RunningNormalizer, gated_returns
from .worldmodel.inference import prior_rollout_batch
from .worldmodel.rssm import LatentModel


@dataclass
class ProposalMode:
    mu: Array  # (H, d_a) means
    sigma: Array  # (H, d_a) diagonal variances

    def copy(self) -> ProposalMode:
        return ProposalMode(self.mu.copy(), self.sigma.copy())


@dataclass
class ModeSet:
    modes: list[ProposalMode]
    alpha_schedule: tuple[float, ...]
    init_var: Array  # (d_a,) variance used for fresh and re-inflated slots

    @property
    def M(self) -> int:
        return len(self.modes)

    def copy(self) -> ModeSet:
        return ModeSet([m.copy() for m in self.modes], self.alpha_schedule, self.init_var.copy())


@dataclass
class ScoredCandidate:
    mode: int
    actions: Array
    hs: Array
    zs: Array
    rewards: Array
    mus: Array
    sigmas: Array
    ucb: Array
    lambdas: Array
    score: float


@dataclass
class ScoredBatch:
    """Scores and traces for ``N`` candidates sharing one start belief."""

    actions: Array  # (N, H, d_a)
    hs: Array
    zs: Array
    rewards: Array  # (N, H)
    gated: GatedReturns

    @property
    def scores(self) -> Array:
        return self.gated.returns[:, 0]

    def candidate(self, i: int, mode: int = 0) -> ScoredCandidate:
        g = self.gated
        return ScoredCandidate(
            mode, self.actions[i], self.hs[i], self.zs[i], self.rewards[i],
            g.mus[i], g.sigmas[i], g.ucb[i], g.lambdas[i], float(g.returns[i, 0]),
        )


@dataclass
class PlanResult:
    action: Array
    modes: ModeSet
    diagnostics: dict[str, Any] = field(default_factory=dict)


def initial_var(cfg: PlannerConfig, bounds: ActionBounds) -> Array:
    """Initial diagonal variance: std equal to ``sigma_init`` times the action range."""
    return (cfg.sigma_init * bounds.span) ** 2


def policy_sequence(actor, belief: Belief, model: LatentModel, H: int, rng: np.random.Generator) -> Array:
    """Roll the actor through the model prior from ``belief`` to get an ``(H, d_a)`` proposal."""
    h, z = belief.h[None], belief.z[None]
    seq = np.empty((H, model.d_a))
    for t in range(H):
        a, _, _ = actor.sample(np.concatenate([h, z], axis=1), rng)
        seq[t] = a[0]
        h = model.transition(h, z, a)
        mean, var = model.prior(h)
        z = mean + np.sqrt(var) * rng.standard_normal(z.shape)
    return seq


def init_modes(
    actor,
    belief: Belief,
    model: LatentModel,
    cfg: PlannerConfig,
    streams: StreamKey,
    bounds: ActionBounds,
) -> ModeSet:
    """Fresh modes: mean ``alpha_m * a_pi + (1 - alpha_m) * a_rand`` per mode.

    ``a_pi`` is one actor rollout shared by all modes (zeros when ``actor`` is
    None); ``a_rand`` is clipped Gaussian noise drawn separately per mode.
    """
    if actor is None:
        a_pi = np.zeros((cfg.H, bounds.dim))
    else:
        a_pi = policy_sequence(actor, belief, model, cfg.H, streams.derive("plan-policy"))
    var0 = initial_var(cfg, bounds)
    modes = []
    for m, alpha in enumerate(cfg.alpha_schedule):
        rng = streams.derive("plan-rand", m)
        a_rand = clip_actions(cfg.rand_std * rng.standard_normal((cfg.H, bounds.dim)), bounds)
        mu = alpha * a_pi + (1.0 - alpha) * a_rand
        modes.append(ProposalMode(mu, np.tile(var0, (cfg.H, 1))))
    return ModeSet(modes, cfg.alpha_schedule, var0)


def warm_start_shift(modes: ModeSet) -> ModeSet:
    """Receding-horizon shift: drop the first slot, repeat the last mean, re-inflate its variance."""
    out = []
    for mode in modes.modes:
        mu = np.concatenate([mode.mu[1:], mode.mu[-1:]], axis=0)
        sigma = np.concatenate([mode.sigma[1:], modes.init_var[None]], axis=0)
        out.append(ProposalMode(mu, sigma))
    return ModeSet(out, modes.alpha_schedule, modes.init_var.copy())


def blend_modes(shifted: ModeSet, fresh: ModeSet, weight: float) -> ModeSet:
    """Convex combination moving ``weight`` of the way from ``shifted`` toward ``fresh``."""
    out = [
        ProposalMode((1.0 - weight) * s.mu + weight * f.mu, (1.0 - weight) * s.sigma + weight * f.sigma)
        for s, f in zip(shifted.modes, fresh.modes)
    ]
    return ModeSet(out, shifted.alpha_schedule, shifted.init_var.copy())


def sample_candidates(mode: ProposalMode, K: int, rng: np.random.Generator, bounds: ActionBounds | None = None, clip: bool = True) -> Array:
    """Draw ``K`` sequences ``(K, H, d_a)`` independently per timestep from the mode."""
    if K < 2:
        raise ValueError("K must be >= 2")
    noise = rng.standard_normal((K,) + mode.mu.shape)
    cand = mode.mu + np.sqrt(mode.sigma) * noise
    return clip_actions(cand, bounds) if clip else cand


def score_candidates(
    candidates: Array,
    start: Belief,
    model: LatentModel,
    critics: CriticEnsemble,
    normalizer: RunningNormalizer,
    cfg: ValueConfig,
    eps: Array,
) -> ScoredBatch:
    """Roll candidates ``(N, H, d_a)`` out from ``start`` and score each by ``G_0``.

    ``eps`` ``(N, H, d_z)`` drives the prior samples; ``normalizer`` is read only.
    """
    N = candidates.shape[0]
    h0 = np.broadcast_to(start.h, (N, start.h.size))
    z0 = np.broadcast_to(start.z, (N, start.z.size))
    hs, zs, rewards = prior_rollout_batch(model, h0, z0, candidates, eps)
    gated = gated_returns(rewards, hs, zs, critics, normalizer, cfg)
    if not np.all(np.isfinite(gated.returns[:, 0])):
        raise FloatingPointError("non-finite candidate score")
    return ScoredBatch(candidates, hs, zs, rewards, gated)


def global_best(scores: Array) -> tuple[float, tuple[int, int]]:
    """Best score over all modes and candidates; ties go to the lowest ``(mode, candidate)``."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if scores.size == 0:
        raise ValueError("no candidates to choose from")
    flat = int(np.argmax(scores))
    m, k = divmod(flat, scores.shape[1])
    return float(scores[m, k]), (m, k)


def shift_scores(scores: Array) -> Array:
    """Subtract the global minimum so every score is >= 0 and the best one is the largest."""
    scores = np.asarray(scores, dtype=np.float64)
    return scores - scores.min()


def mode_weights(scores: Array, g_star: float, tau: float, delta: float) -> Array:
    """Softmax over one mode's candidates of ``G / (tau * (G* + delta))``."""
    scores = np.asarray(scores, dtype=np.float64)
    if not (np.all(np.isfinite(scores)) and np.isfinite(g_star)):
        raise ValueError("scores must be finite")
    logits = scores / (g_star + delta) / tau
    logits = logits - logits.max()
    w = np.exp(logits)
    return w / w.sum()


def update_mode(mode: ProposalMode, candidates: Array, weights: Array, epsilon: float) -> ProposalMode:
    """Weighted moment matching with a variance floor ``epsilon``."""
    w = np.asarray(weights, dtype=np.float64)
    mu = np.tensordot(w, candidates, axes=(0, 0))
    var = np.tensordot(w, (candidates - mu) ** 2, axes=(0, 0)) + epsilon
    return ProposalMode(mu, var)


def reweight_and_update(modes: ModeSet, candidates: Array, scores: Array, cfg: PlannerConfig):
    """One refit of every mode from its scored candidates ``(M, K, H, d_a)`` / ``(M, K)``.

    Returns:
        ``(new_modes, weights (M, K), g_star, (mode, candidate) of the best rollout)``.
    """
    g_star, winner = global_best(scores)
    shifted = shift_scores(scores)
    g_star_shifted = float(shifted[winner])
    weights = np.stack([mode_weights(shifted[m], g_star_shifted, cfg.tau, cfg.delta) for m in range(modes.M)])
    new = [update_mode(modes.modes[m], candidates[m], weights[m], cfg.epsilon) for m in range(modes.M)]
    return ModeSet(new, modes.alpha_schedule, modes.init_var), weights, g_star, winner


def sigma_split(sigmas: Array, lambdas: Array) -> tuple[float, float]:
    """Mean lambda at states whose ensemble std is above vs at-or-below the median."""
    med = np.median(sigmas)
    hi = sigmas > med
    mean_hi = float(lambdas[hi].mean()) if hi.any() else float("nan")
    mean_lo = float(lambdas[~hi].mean()) if (~hi).any() else float("nan")
    return mean_hi, mean_lo


def plan(
    belief: Belief,
    model: LatentModel,
    critics: CriticEnsemble,
    actor,
    normalizer: RunningNormalizer,
    cfg: PlannerConfig,
    vcfg: ValueConfig,
    streams: StreamKey,
    modes: ModeSet | None = None,
    bounds: ActionBounds | None = None,
    workers: int = 1,
    update_normalizer: bool = True,
) -> PlanResult:
    """Choose an action for ``belief``.

    Modes carried over from the previous call (``modes``) are shifted one step
    and then blended toward a fresh policy/random initialization; otherwise the
    fresh initialization is used as is. Scoring is split into fixed-size chunks
    of candidates whose random draws are keyed by ``(mode, iteration)``, so the
    result does not depend on ``workers``. The normalizer is read through a
    snapshot and updated once, after all iterations.
    """
    t0 = time.perf_counter()
    bounds = bounds or ActionBounds.symmetric(model.d_a)
    snap = normalizer.snapshot()
    fresh = init_modes(actor, belief, model, cfg, streams, bounds)
    if modes is None:
        current = fresh
    else:
        if modes.M != cfg.M or modes.modes[0].mu.shape[0] != cfg.H:
            raise ValueError("carried-over modes do not match the planner configuration")
        current = blend_modes(warm_start_shift(modes), fresh, cfg.warm_blend)

    M, K, H = cfg.M, cfg.K, cfg.H
    N = M * K
    chunks = [(s, min(s + cfg.chunk_size, N)) for s in range(0, N, cfg.chunk_size)]
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    g_stars: list[float] = []
    ucb_seen: list[Array] = []
    lam_sum = np.zeros(max(H - 1, 0))
    lam_n = 0
    winner = (0, 0)
    scores = np.zeros((M, K))
    try:
        for it in range(cfg.L):
            cand = np.stack([sample_candidates(current.modes[m], K, streams.derive("plan-sample", m, it), bounds) for m in range(M)])
            eps = np.stack([streams.derive("plan-rollout", m, it).standard_normal((K, H, model.d_z)) for m in range(M)])
            flat_c = cand.reshape(N, H, -1)
            flat_e = eps.reshape(N, H, -1)

            def run(span: tuple[int, int]) -> ScoredBatch:
                a, b = span
                return score_candidates(flat_c[a:b], belief, model, critics, snap, vcfg, flat_e[a:b])

            parts = list(pool.map(run, chunks)) if pool is not None else [run(c) for c in chunks]
            scores = np.concatenate([p.scores for p in parts]).reshape(M, K)
            ucb_all = np.concatenate([p.gated.ucb for p in parts])
            lam_all = np.concatenate([p.gated.lambdas for p in parts])
            sig_all = np.concatenate([p.gated.sigmas for p in parts])[:, :-1]
            ucb_seen.append(ucb_all[:, :-1].ravel())
            lam_sum += lam_all.sum(axis=0)
            lam_n += lam_all.shape[0]
            current, _, g_star, winner = reweight_and_update(current, cand, scores, cfg)
            g_stars.append(g_star)
    finally:
        if pool is not None:
            pool.shutdown()

    split = sigma_split(sig_all, lam_all) if H > 1 else (float("nan"), float("nan"))
    best_mode = winner[0]
    action = clip_actions(current.modes[best_mode].mu[0], bounds)
    if update_normalizer and ucb_seen:
        normalizer.update(np.concatenate(ucb_seen))
    diagnostics = {
        "g_star": g_stars,
        "mode_best": scores.max(axis=1).tolist(),
        "selected_mode": int(best_mode),
        "mean_lambda_by_depth": (lam_sum / max(lam_n, 1)).tolist(),
        "lambda_high_sigma": split[0],
        "lambda_low_sigma": split[1],
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    }
    return PlanResult(action, current, diagnostics)
