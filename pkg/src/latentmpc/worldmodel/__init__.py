from .envs import CorridorSpec, EpisodeDone, MultiGoalReacher, ReacherSpec, TwoGapCorridor, env_step, make_env
from .inference import (
    ElboEstimate,
    LatentTrajectory,
    elbo,
    exact_evidence,
    filter_batch,
    filter_step,
    posterior_filter,
    prior_rollout,
    prior_rollout_batch,
)
from .matched import PointMassModel
from .rssm import GaussianRSSM, LatentModel, LinearGaussianRSSM, NonlinearGaussianRSSM, gauss_logpdf, kl_diag

__all__ = [
    "CorridorSpec",
    "ElboEstimate",
    "EpisodeDone",
    "GaussianRSSM",
    "LatentModel",
    "LatentTrajectory",
    "LinearGaussianRSSM",
    "MultiGoalReacher",
    "NonlinearGaussianRSSM",
    "PointMassModel",
    "ReacherSpec",
    "TwoGapCorridor",
    "elbo",
    "env_step",
    "exact_evidence",
    "filter_batch",
    "filter_step",
    "gauss_logpdf",
    "kl_diag",
    "make_env",
    "posterior_filter",
    "prior_rollout",
    "prior_rollout_batch",
]
