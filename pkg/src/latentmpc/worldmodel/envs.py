"""Analytic 2-D point-mass environments with known multimodal structure.

Both environments expose the geometry they are built from (``move`` and
``state_reward``) so that a latent model can be matched to them exactly.
Observations are noisy positions, withheld with probability ``p_occ``;
a withheld observation is returned as ``None``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..core import ActionBounds, Array, clip_actions


class EpisodeDone(RuntimeError):
    """Raised when stepping an environment whose episode already ended."""


@dataclass(frozen=True)
class CorridorSpec:
    start: tuple[float, float] = (0.5, 0.3)
    goal: tuple[float, float] = (0.5, 0.85)
    goal_radius: float = 0.1
    wall_y: float = 0.5
    gap_centers: tuple[float, float] = (0.15, 0.85)
    gap_half_width: float = 0.08
    step_size: float = 0.08
    process_noise: float = 0.01
    obs_noise: float = 0.01
    p_occ: float = 0.2
    max_steps: int = 40
    step_penalty: float = 0.01
    shaping: float = 1.0
    bonus: float = 10.0
    collision_penalty: float = 0.1
    metric: str = "geodesic"  # or "euclidean": straight-line distance, ignoring the wall


@dataclass(frozen=True)
class ReacherSpec:
    start: tuple[float, float] = (0.0, 0.0)
    goal_distance: float = 0.6
    goal_width: float = 0.15
    speed: float = 0.1
    process_noise: float = 0.005
    obs_noise: float = 0.01
    p_occ: float = 0.0
    max_steps: int = 30


class _PointEnv:
    spec: CorridorSpec | ReacherSpec
    obs_dim = 2
    action_dim = 2

    def __init__(self, rng: np.random.Generator | None = None):
        self.bounds = ActionBounds.symmetric(2)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.pos = np.asarray(self.spec.start, dtype=np.float64)
        self.t = 0
        self.done = True

    @property
    def p_occ(self) -> float:
        return self.spec.p_occ

    def reset(self, rng: np.random.Generator | None = None) -> tuple[Array | None, float]:
        """Start a new episode. Returns the first observation and its state reward."""
        if rng is not None:
            self.rng = rng
        self.pos = np.asarray(self.spec.start, dtype=np.float64).copy()
        self.t = 0
        self.done = False
        return self._observe(), float(self.state_reward(self.pos[None])[0])

    def _observe(self) -> Array | None:
        noise = self.rng.normal(0.0, self.spec.obs_noise, size=2)
        hidden = self.rng.random() < self.spec.p_occ
        return None if hidden else self.pos + noise

    def project(self, pos: Array, new: Array) -> tuple[Array, Array]:
        """Free-space displacement ``pos -> new``; returns (position, collided)."""
        new = np.asarray(new, dtype=np.float64)
        return new, np.zeros(new.shape[:-1], dtype=bool)

    def move(self, pos: Array, actions: Array) -> tuple[Array, Array]:
        raise NotImplementedError

    def state_reward(self, pos: Array) -> Array:
        raise NotImplementedError


class TwoGapCorridor(_PointEnv):
    """Unit square split by a horizontal wall with two gaps symmetric about the start column.

    Reaching the goal (above the wall) ends the episode with a bonus; every
    step pays a small penalty plus the distance to the goal, and running into
    the wall leaves the point on its own side and costs a collision penalty.
    """

    def __init__(self, spec: CorridorSpec | None = None, rng: np.random.Generator | None = None):
        self.spec = spec or CorridorSpec()
        super().__init__(rng)

    def with_occlusion(self, p_occ: float) -> TwoGapCorridor:
        return TwoGapCorridor(replace(self.spec, p_occ=p_occ), self.rng)

    def in_gap(self, x: Array) -> Array:
        x = np.asarray(x)
        hit = np.zeros(x.shape, dtype=bool)
        for c in self.spec.gap_centers:
            hit |= np.abs(x - c) <= self.spec.gap_half_width
        return hit

    def project(self, pos: Array, new: Array) -> tuple[Array, Array]:
        """Keep a displacement ``pos -> new`` out of the wall; returns (position, collided)."""
        s = self.spec
        new = np.clip(new, 0.0, 1.0)
        y0, y1 = pos[..., 1] - s.wall_y, new[..., 1] - s.wall_y
        crosses = (y0 * y1 < 0) | ((y1 == 0) & (y0 != 0))
        dy = new[..., 1] - pos[..., 1]
        safe_dy = np.where(dy == 0, 1.0, dy)
        frac = np.where(crosses, (s.wall_y - pos[..., 1]) / safe_dy, 0.0)
        x_cross = pos[..., 0] + frac * (new[..., 0] - pos[..., 0])
        collided = crosses & ~self.in_gap(x_cross)
        side = np.where(y0 < 0, -1.0, 1.0)
        out = new.copy()
        out[..., 1] = np.where(collided, s.wall_y + side * 1e-3, new[..., 1])
        return out, collided

    def move(self, pos: Array, actions: Array) -> tuple[Array, Array]:
        pos = np.asarray(pos, dtype=np.float64)
        step = self.spec.step_size * clip_actions(actions, self.bounds)
        return self.project(pos, pos + step)

    def goal_distance(self, pos: Array) -> Array:
        """Shortest free-space path length to the goal centre.

        From the far side of the wall the path bends once, at the point of a
        gap opening nearest to the straight line; the shorter of the two gaps
        is used.
        """
        s = self.spec
        pos = np.asarray(pos, dtype=np.float64)
        goal = np.asarray(s.goal)
        direct = np.linalg.norm(pos - goal, axis=-1)
        same_side = (pos[..., 1] - s.wall_y) * (goal[1] - s.wall_y) >= 0
        dy = goal[1] - pos[..., 1]
        frac = np.where(dy == 0, 0.0, (s.wall_y - pos[..., 1]) / np.where(dy == 0, 1.0, dy))
        x_line = pos[..., 0] + frac * (goal[0] - pos[..., 0])
        best = np.full(direct.shape, np.inf)
        for c in s.gap_centers:
            x = np.clip(x_line, c - s.gap_half_width, c + s.gap_half_width)
            via = np.hypot(pos[..., 0] - x, pos[..., 1] - s.wall_y) + np.hypot(goal[0] - x, goal[1] - s.wall_y)
            best = np.minimum(best, via)
        return np.where(same_side, direct, best)

    def reached(self, pos: Array) -> Array:
        return self.goal_distance(pos) <= self.spec.goal_radius

    def state_reward(self, pos: Array) -> Array:
        """Reward attributable to a position alone (no collision term)."""
        s = self.spec
        d = self.goal_distance(pos)
        shaped = d if s.metric == "geodesic" else np.linalg.norm(np.asarray(pos) - np.asarray(s.goal), axis=-1)
        return -s.step_penalty - s.shaping * shaped + s.bonus * (d <= s.goal_radius)

    def step(self, action: Array) -> tuple[Array | None, float, bool]:
        if self.done:
            raise EpisodeDone("step() called after the episode finished; call reset()")
        s = self.spec
        a = clip_actions(action, self.bounds)
        target = self.pos + s.step_size * a + self.rng.normal(0.0, s.process_noise, size=2)
        new, collided = self.project(self.pos, target)
        self.pos = new
        self.t += 1
        reward = float(self.state_reward(new[None])[0]) - s.collision_penalty * float(collided)
        self.done = bool(self.reached(new)) or self.t >= s.max_steps
        return self._observe(), reward, self.done


class MultiGoalReacher(_PointEnv):
    """Velocity-controlled point with three equally rewarded goals 120 degrees apart."""

    def __init__(self, spec: ReacherSpec | None = None, rng: np.random.Generator | None = None):
        self.spec = spec or ReacherSpec()
        super().__init__(rng)
        angles = np.pi / 2 + np.arange(3) * 2 * np.pi / 3
        self.goals = np.asarray(self.spec.start) + self.spec.goal_distance * np.stack([np.cos(angles), np.sin(angles)], 1)
        self.vel = np.zeros(2)

    def reset(self, rng: np.random.Generator | None = None) -> tuple[Array | None, float]:
        self.vel = np.zeros(2)
        return super().reset(rng)

    def move(self, pos: Array, actions: Array) -> tuple[Array, Array]:
        pos = np.asarray(pos, dtype=np.float64)
        new = pos + self.spec.speed * clip_actions(actions, self.bounds)
        return new, np.zeros(new.shape[:-1], dtype=bool)

    def state_reward(self, pos: Array) -> Array:
        pos = np.asarray(pos, dtype=np.float64)
        d2 = np.sum((pos[..., None, :] - self.goals) ** 2, axis=-1)
        return np.max(np.exp(-d2 / (2 * self.spec.goal_width**2)), axis=-1)

    def step(self, action: Array) -> tuple[Array | None, float, bool]:
        if self.done:
            raise EpisodeDone("step() called after the episode finished; call reset()")
        a = clip_actions(action, self.bounds)
        self.vel = self.spec.speed * a
        self.pos = self.pos + self.vel + self.rng.normal(0.0, self.spec.process_noise, size=2)
        self.t += 1
        self.done = self.t >= self.spec.max_steps
        return self._observe(), float(self.state_reward(self.pos[None])[0]), self.done


def env_step(env: _PointEnv, action: Array) -> tuple[Array | None, float, bool]:
    """Advance ``env`` by one action; returns (observation or None, reward, done)."""
    return env.step(action)


def make_env(name: str, rng: np.random.Generator | None = None, **overrides) -> _PointEnv:
    if name == "two_gap_corridor":
        return TwoGapCorridor(replace(CorridorSpec(), **overrides), rng)
    if name == "multi_goal_reacher":
        return MultiGoalReacher(replace(ReacherSpec(), **overrides), rng)
    raise ValueError(f"unknown environment {name!r}")
