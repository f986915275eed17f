"""Shared domain types, bounded-action arithmetic and deterministic seeding."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]


@dataclass(frozen=True)
class ActionBounds:
    """Per-component closed interval for actions. Defaults to [-1, 1]^dim."""

    low: Array
    high: Array

    @classmethod
    def symmetric(cls, dim: int, limit: float = 1.0) -> ActionBounds:
        return cls(np.full(dim, -limit), np.full(dim, limit))

    def __post_init__(self) -> None:
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)
        if low.shape != high.shape or low.ndim != 1:
            raise ValueError("bounds must be 1-D arrays of equal length")
        if np.any(low > high):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return int(self.low.shape[0])

    @property
    def span(self) -> Array:
        return self.high - self.low


def clip_actions(seq: Array, bounds: ActionBounds | None = None) -> Array:
    """Clamp every component of an action array into its bound.

    Works on a single action ``(d_a,)``, a sequence ``(H, d_a)`` or any batch
    ``(..., d_a)``. Values already inside the bound are returned unchanged.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if bounds is None:
        return np.clip(seq, -1.0, 1.0)
    return np.clip(seq, bounds.low, bounds.high)


@dataclass(frozen=True)
class Belief:
    """Filtered latent state: deterministic memory ``h`` plus stochastic latent ``z``."""

    h: Array
    z: Array

    def __post_init__(self) -> None:
        h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        z = np.asarray(self.z, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(z))):
            raise ValueError("belief components must be finite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "z", z)

    def stacked(self) -> Array:
        return np.concatenate([self.h, self.z])


@dataclass(frozen=True)
class PlannerConfig:
    """Budget and numerical constants of the mixture-proposal MPPI planner."""

    H: int = 15
    M: int = 4
    K: int = 256
    L: int = 6
    tau: float = 0.5
    delta: float = 1e-6
    epsilon: float = 1e-4
    sigma_init: float = 0.5
    rand_std: float = 0.5
    warm_blend: float = 0.3
    alpha_schedule: tuple[float, ...] | None = None
    chunk_size: int = 64

    def __post_init__(self) -> None:
        if self.H < 1 or self.M < 1 or self.K < 2 or self.L < 1:
            raise ValueError("need H >= 1, M >= 1, K >= 2, L >= 1")
        if self.tau <= 0 or self.delta <= 0 or self.epsilon <= 0:
            raise ValueError("tau, delta and epsilon must be positive")
        if not 0.0 <= self.warm_blend <= 1.0:
            raise ValueError("warm_blend must lie in [0, 1]")
        if self.alpha_schedule is None:
            sched = tuple(float(a) for a in np.linspace(1.0, 0.0, self.M)) if self.M > 1 else (1.0,)
            object.__setattr__(self, "alpha_schedule", sched)
        else:
            object.__setattr__(self, "alpha_schedule", tuple(float(a) for a in self.alpha_schedule))
        if len(self.alpha_schedule) != self.M:
            raise ValueError(f"alpha_schedule needs exactly M={self.M} entries")
        if any(a < 0.0 or a > 1.0 for a in self.alpha_schedule):
            raise ValueError("alpha_schedule entries must lie in [0, 1]")


@dataclass(frozen=True)
class ValueConfig:
    """Critic-ensemble and return settings."""

    E: int = 5
    beta: float = 1.0
    lambda_min: float = 0.6
    lambda_max: float = 0.95
    gamma: float = 0.99

    def __post_init__(self) -> None:
        if self.E < 2:
            raise ValueError("ensemble size E must be >= 2")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.0 <= self.lambda_min <= self.lambda_max <= 1.0:
            raise ValueError("need 0 <= lambda_min <= lambda_max <= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


def _tag_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


@dataclass(frozen=True)
class SeedSpec:
    """Master seed from which all named random streams are derived."""

    master_seed: int
    _mask: int = field(default=(1 << 64) - 1, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "master_seed", int(self.master_seed) & self._mask)


def derive_stream(spec: SeedSpec | int, purpose: str, *indices: int) -> np.random.Generator:
    """Return an independent generator keyed by ``(seed, purpose, indices)``.

    The stream depends only on its key, never on how many other streams were
    derived before it, so work split across any number of workers draws the
    same numbers.
    """
    seed = spec.master_seed if isinstance(spec, SeedSpec) else SeedSpec(spec).master_seed
    key = (_tag_key(purpose),) + tuple(int(i) for i in indices)
    if any(k < 0 for k in key):
        raise ValueError("stream indices must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class StreamKey:
    """A seed plus a fixed index prefix; ``derive`` appends purpose and further indices."""

    spec: SeedSpec
    indices: tuple[int, ...] = ()

    def derive(self, purpose: str, *more: int) -> np.random.Generator:
        return derive_stream(self.spec, purpose, *self.indices, *more)

    def child(self, *more: int) -> StreamKey:
        return StreamKey(self.spec, self.indices + tuple(int(i) for i in more))
