from .config import ABLATIONS, ConfigError, ExperimentConfig, apply_ablation, load, parse_lines, resolve
from .runner import CheckpointError, build_agent, build_env, load_checkpoint, replay, run_experiment, run_seed
from .stats import Comparison, GridMismatch, compare_run_sets, compare_values, summarize, welch
from .study import StudyResult, Variant, run_study

__all__ = [
    "ABLATIONS",
    "CheckpointError",
    "Comparison",
    "ConfigError",
    "ExperimentConfig",
    "GridMismatch",
    "StudyResult",
    "Variant",
    "apply_ablation",
    "build_agent",
    "build_env",
    "compare_run_sets",
    "compare_values",
    "load",
    "load_checkpoint",
    "parse_lines",
    "replay",
    "resolve",
    "run_experiment",
    "run_seed",
    "run_study",
    "summarize",
    "welch",
]
