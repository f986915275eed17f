"""Independent reference computations used to check the main implementation.

Each function here reaches its answer by a different route than the code it
checks (explicit sums instead of recursions, loops instead of vectorized
reductions, quadrature instead of Gaussian algebra), so agreement is evidence
of correctness rather than of shared mistakes.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .core import Array


def expanded_lambda_return(rewards: Array, mus: Array, lambdas: Array, gamma: float, t: int = 0) -> float:
    """Closed-form sum of the lambda-return from index ``t`` with every recursion unrolled.

    ``G_t = sum_{k=t}^{H-2} c_k (r_k + gamma (1 - lam_k) mu_{k+1}) + c_{H-1} mu_{H-1}``
    with ``c_k = prod_{j=t}^{k-1} gamma lam_j``.
    """
    H = len(rewards)
    total = 0.0
    for k in range(t, H - 1):
        coef = 1.0
        for j in range(t, k):
            coef *= gamma * lambdas[j]
        total += coef * (rewards[k] + gamma * (1.0 - lambdas[k]) * mus[k + 1])
    coef = 1.0
    for j in range(t, H - 1):
        coef *= gamma * lambdas[j]
    return total + coef * mus[H - 1]


def weighted_stats(candidates: Array, weights: Array, epsilon: float) -> tuple[Array, Array]:
    """Element-by-element weighted mean and variance (plus floor) with plain Python loops."""
    K, H, d = candidates.shape
    mu = np.zeros((H, d))
    var = np.zeros((H, d))
    for t in range(H):
        for i in range(d):
            m = math.fsum(float(weights[k]) * float(candidates[k, t, i]) for k in range(K))
            v = math.fsum(float(weights[k]) * (float(candidates[k, t, i]) - m) ** 2 for k in range(K))
            mu[t, i] = m
            var[t, i] = v + epsilon
    return mu, var


def two_pass_moments(values: Array) -> tuple[Array, Array]:
    """Mean and unbiased std per column by two explicit passes."""
    values = np.asarray(values, dtype=np.float64)
    E = values.shape[0]
    out_mu = np.empty(values.shape[1:])
    out_sd = np.empty(values.shape[1:])
    for idx in np.ndindex(values.shape[1:]):
        col = [float(values[(e,) + idx]) for e in range(E)]
        m = math.fsum(col) / E
        out_mu[idx] = m
        out_sd[idx] = math.sqrt(math.fsum((c - m) ** 2 for c in col) / (E - 1))
    return out_mu, out_sd


def central_difference(f: Callable[[Array], float], x: Array, step: float = 1e-5) -> Array:
    """Central finite-difference gradient of a scalar function of a flat vector."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + step
        fp = f(x)
        x[i] = old - step
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * step)
    return g


def relative_error(a: Array, b: Array, floor: float = 1e-8) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), floor))


def gaussian_conditional(mean: Array, cov: Array, obs_idx: Array, value: Array) -> tuple[Array, Array]:
    """Conditional of a joint Gaussian given the components ``obs_idx`` equal ``value``."""
    obs_idx = np.asarray(obs_idx)
    rest = np.setdiff1d(np.arange(len(mean)), obs_idx)
    S_oo = cov[np.ix_(obs_idx, obs_idx)]
    S_ro = cov[np.ix_(rest, obs_idx)]
    gain = np.linalg.solve(S_oo, S_ro.T).T
    m = mean[rest] + gain @ (value - mean[obs_idx])
    c = cov[np.ix_(rest, rest)] - gain @ S_ro.T
    return m, c


def quadrature_evidence_1d(model, o0: float, o1: float, a0: float, n: int = 4001, width: float = 12.0) -> float:
    """``log p(o_0, o_1 | a_0)`` for a scalar linear-Gaussian model without rewards.

    Integrates over ``z_0`` and ``z_1`` on a tensor grid (trapezoid rule), using
    only the model's one-step component densities.
    """
    p = model.p

    def npdf(x, m, v):
        return np.exp(-0.5 * (x - m) ** 2 / v) / np.sqrt(2 * np.pi * v)

    pv = float(np.exp(p["prior_logvar"][0]))
    ov = float(np.exp(p["obs_logvar"][0]))
    h0 = 0.0
    m0 = float(p["W"][0, 0] * h0 + p["w0"][0])
    z0 = np.linspace(m0 - width * np.sqrt(pv), m0 + width * np.sqrt(pv), n)
    w0 = npdf(z0, m0, pv) * npdf(o0, p["D"][0, 0] * h0 + p["D"][0, 1] * z0 + p["d0"][0], ov)
    h1 = p["A"][0, 0] * h0 + p["B"][0, 0] * z0 + p["C"][0, 0] * a0 + p["b"][0]
    m1 = p["W"][0, 0] * h1 + p["w0"][0]
    # inner integral over z1 given h1 is a Gaussian convolution evaluated on its own grid
    u = np.linspace(-width, width, n)
    inner = np.empty(n)
    for i in range(n):
        z1 = m1[i] + np.sqrt(pv) * u
        f = npdf(z1, m1[i], pv) * npdf(o1, p["D"][0, 0] * h1[i] + p["D"][0, 1] * z1 + p["d0"][0], ov)
        inner[i] = np.trapezoid(f, z1)
    return float(np.log(np.trapezoid(w0 * inner, z0)))


def corridor_heading_clusters(env, n_headings: int = 72, grid: int = 81, horizon: int = 60, tol: float = 0.05) -> list[float]:
    """Optimal first headings from the start by value iteration on a discretized corridor.

    States are grid cells of the unit square; actions are ``n_headings`` unit
    directions of one step length, using the environment's own deterministic
    move and state reward (no noise). Returns the angles whose one-step
    lookahead value is within ``tol`` of the best; snapping positions to the
    grid perturbs values by a few hundredths, so ``tol`` must exceed that or
    the mirror-image optimum can be lost to rounding.
    """
    xs = np.linspace(0.0, 1.0, grid)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    cells = np.stack([X.ravel(), Y.ravel()], axis=1)
    angles = np.linspace(0.0, 2 * np.pi, n_headings, endpoint=False)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    goal_cells = env.reached(cells)

    def snap(pos: Array) -> Array:
        idx = np.clip(np.rint(pos * (grid - 1)).astype(int), 0, grid - 1)
        return idx[..., 0] * grid + idx[..., 1]

    nxt = np.empty((len(cells), n_headings), dtype=int)
    rew = np.empty((len(cells), n_headings))
    for j, d in enumerate(dirs):
        new, hit = env.move(cells, np.broadcast_to(d, cells.shape))
        nxt[:, j] = snap(new)
        rew[:, j] = env.state_reward(new) - env.spec.collision_penalty * hit
    V = np.zeros(len(cells))
    for _ in range(horizon):
        Q = rew + np.where(goal_cells[nxt], 0.0, V[nxt])
        V = Q.max(axis=1)
    start = np.asarray(env.spec.start, dtype=np.float64)
    q0 = np.empty(n_headings)
    for j, d in enumerate(dirs):
        new, hit = env.move(start[None], d[None])
        nc = snap(new[0])
        q0[j] = env.state_reward(new)[0] - env.spec.collision_penalty * hit[0] + (0.0 if goal_cells[nc] else V[nc])
    best = q0.max()
    return [float(a) for a, q in zip(angles, q0) if q >= best - tol]


def cluster_angles(angles: list[float], gap: float) -> list[list[float]]:
    """Group angles on the circle into clusters separated by more than ``gap``."""
    if not angles:
        return []
    a = sorted(angles)
    clusters = [[a[0]]]
    for x in a[1:]:
        if x - clusters[-1][-1] > gap:
            clusters.append([x])
        else:
            clusters[-1].append(x)
    if len(clusters) > 1 and (a[0] + 2 * np.pi) - a[-1] <= gap:
        clusters[0] = clusters.pop() + clusters[0]
    return clusters


def random_policy_returns(make_env: Callable[[int], object], episodes: int, seed: int) -> Array:
    """Undiscounted returns of uniformly random actions, driven by plain ``default_rng`` streams."""
    out = []
    for ep in range(episodes):
        rng = np.random.default_rng([seed, ep])
        env = make_env(ep)
        env.reset(np.random.default_rng([seed, ep, 1]))
        total, done = 0.0, False
        while not done:
            a = rng.uniform(env.bounds.low, env.bounds.high)
            _, r, done = env.step(a)
            total += r
        out.append(total)
    return np.asarray(out)


def grid_search_constant_action(score: Callable[[Array], float], low: float, high: float, n: int = 2001) -> float:
    """Best constant scalar action by exhaustive search."""
    grid = np.linspace(low, high, n)
    vals = np.array([score(np.array([a])) for a in grid])
    return float(grid[int(np.argmax(vals))])


def t_interval(x: Array, level: float = 0.95) -> tuple[float, float]:
    """Student-t confidence interval for a mean, via scipy's distribution object."""
    from scipy import stats

    x = np.asarray(x, dtype=np.float64)
    return tuple(float(v) for v in stats.t.interval(level, len(x) - 1, loc=x.mean(), scale=stats.sem(x)))
