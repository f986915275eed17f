"""Ring buffer of real transitions with a within-episode sequence sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Array


@dataclass
class SequenceBatch:
    obs: Array  # (N, T+1, d_o), zeros where missing
    mask: Array  # (N, T+1) observation present
    actions: Array  # (N, T, d_a)
    rewards: Array  # (N, T+1)

    def __len__(self) -> int:
        return self.obs.shape[0]


class ReplayBuffer:
    """Stores one row per visited state: observation (or missing), reward, and the action taken next.

    The last state of an episode has no following action; its action row is
    zero and is never used, because sampled windows end at or before it.
    """

    def __init__(self, capacity: int, d_o: int, d_a: int):
        if capacity < 2:
            raise ValueError("capacity must be >= 2")
        self.capacity = capacity
        self.obs = np.zeros((capacity, d_o))
        self.mask = np.zeros(capacity, dtype=bool)
        self.actions = np.zeros((capacity, d_a))
        self.rewards = np.zeros(capacity)
        self.episode = np.full(capacity, -1, dtype=np.int64)
        self.step = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self.head = 0

    def add(self, episode: int, step: int, obs: Array | None, reward: float) -> None:
        """Append the state reached at ``step`` of ``episode``."""
        i = self.head
        self.mask[i] = obs is not None
        self.obs[i] = 0.0 if obs is None else obs
        self.rewards[i] = reward
        self.actions[i] = 0.0
        self.episode[i] = episode
        self.step[i] = step
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def set_last_action(self, action: Array) -> None:
        """Record the action taken from the most recently added state."""
        self.actions[(self.head - 1) % self.capacity] = action

    def __len__(self) -> int:
        return self.size

    def _valid_starts(self, T: int) -> Array:
        idx = np.arange(self.size)
        if self.size < self.capacity:
            order = idx
        else:
            order = (self.head + idx) % self.capacity  # oldest first
        if len(order) <= T:
            return np.zeros(0, dtype=np.int64)
        start, end = order[: len(order) - T], order[T:]
        ok = (self.episode[start] == self.episode[end]) & (self.step[end] - self.step[start] == T)
        return start[ok]

    def sample(self, n: int, T: int, rng: np.random.Generator) -> SequenceBatch:
        """``n`` uniformly chosen windows of ``T+1`` consecutive states from single episodes."""
        starts = self._valid_starts(T)
        if starts.size == 0:
            raise ValueError(f"no episode segment of {T + 1} states stored yet")
        pick = starts[rng.integers(0, starts.size, size=n)]
        rows = (pick[:, None] + np.arange(T + 1)) % self.capacity
        return SequenceBatch(self.obs[rows], self.mask[rows], self.actions[rows[:, :-1]], self.rewards[rows])
