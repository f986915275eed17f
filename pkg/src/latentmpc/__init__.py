"""Latent model-predictive control with mixture-proposal MPPI and uncertainty-gated returns."""

from .core import ActionBounds, Belief, PlannerConfig, SeedSpec, StreamKey, ValueConfig, clip_actions, derive_stream
from .planner import ModeSet, ProposalMode, plan
from .value import CriticEnsemble, RunningNormalizer, gated_returns, lambda_return

__version__ = "0.1.0"

__all__ = [
    "ActionBounds",
    "Belief",
    "CriticEnsemble",
    "ModeSet",
    "PlannerConfig",
    "ProposalMode",
    "RunningNormalizer",
    "SeedSpec",
    "StreamKey",
    "ValueConfig",
    "clip_actions",
    "derive_stream",
    "gated_returns",
    "lambda_return",
    "plan",
]
