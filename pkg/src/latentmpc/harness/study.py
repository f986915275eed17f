"""Ablation studies: the same base configuration under several presets and seeds."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import resolve
from .runner import SeedOutcome, run_seed
from .stats import Comparison, compare_values


@dataclass
class Variant:
    name: str
    ablation: str = "full"
    overrides: dict[str, str] = field(default_factory=dict)


@dataclass
class StudyResult:
    outcomes: dict[str, list[SeedOutcome]]
    comparison: Comparison

    def values(self, name: str) -> np.ndarray:
        return np.array([o.final_eval() for o in self.outcomes[name]])

    def lambda_split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        arr = np.array([o.lambda_split for o in self.outcomes[name]])
        return arr[:, 0], arr[:, 1]


def run_study(
    base: dict[str, str],
    variants: list[Variant],
    seeds: list[int],
    out_dir: str | Path,
    pairs: list[tuple[str, str]] | None = None,
) -> StudyResult:
    """Run every variant for every seed; compare per-seed final evaluation returns.

    Each (variant, seed) gets its own complete run directory under
    ``out_dir/<variant>/seed_<n>``.
    """
    out_dir = Path(out_dir)
    outcomes: dict[str, list[SeedOutcome]] = {}
    for v in variants:
        cfg = resolve({**base, "seeds": ", ".join(str(s) for s in seeds)}, v.ablation, v.overrides)
        vdir = out_dir / v.name
        vdir.mkdir(parents=True, exist_ok=True)
        (vdir / "resolved_config.txt").write_text(cfg.canonical())
        outcomes[v.name] = [run_seed(cfg, s, vdir / f"seed_{s}") for s in seeds]
    groups = {name: np.array([o.final_eval() for o in outs]) for name, outs in outcomes.items()}
    return StudyResult(outcomes, compare_values(groups, pairs))
