from .actor import GaussianActor, UniformActor
from .loop import METRIC_COLUMNS, Agent, EpisodeResult, Learner, LoopMetrics, Schedule, evaluate, run_episode, train_loop
from .replay import ReplayBuffer, SequenceBatch
from .updates import ImaginedBatch, ModelTrainer, actor_update, attach_returns, critic_update, imagine_rollouts, model_update

__all__ = [
    "METRIC_COLUMNS",
    "Agent",
    "EpisodeResult",
    "GaussianActor",
    "ImaginedBatch",
    "Learner",
    "LoopMetrics",
    "ModelTrainer",
    "ReplayBuffer",
    "Schedule",
    "SequenceBatch",
    "UniformActor",
    "actor_update",
    "attach_returns",
    "critic_update",
    "evaluate",
    "imagine_rollouts",
    "model_update",
    "run_episode",
    "train_loop",
]
