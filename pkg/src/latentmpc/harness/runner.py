"""Building agents from a resolved config, running seeds, checkpoints and replay."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..core import Belief, SeedSpec, StreamKey, derive_stream
from ..learner.actor import GaussianActor
from ..learner.loop import METRIC_COLUMNS, Agent, run_episode, train_loop
from ..value import CriticEnsemble, RunningNormalizer
from ..worldmodel.envs import make_env
from ..worldmodel.matched import PointMassModel
from ..worldmodel.rssm import GaussianRSSM, LinearGaussianRSSM, NonlinearGaussianRSSM
from .config import ExperimentConfig, from_canonical

OUTPUT_ENV = "LATENTMPC_OUTPUT_ROOT"
CHECKPOINT_FORMAT = "latentmpc-checkpoint"
CHECKPOINT_VERSION = 1
RUN_FILES = ("config.txt", "metrics.csv", "diagnostics.ndjson", "checkpoint.json", "manifest.json")


class CheckpointError(ValueError):
    pass


def output_root(default: str = "runs") -> Path:
    return Path(os.environ.get(OUTPUT_ENV, default))


def build_env(cfg: ExperimentConfig):
    return make_env(cfg.env_name, **cfg.env_kwargs())


def build_model(cfg: ExperimentConfig, env, seed: int):
    ms = cfg.model
    if ms.family == "matched":
        return PointMassModel(env)
    rng = derive_stream(seed, "model-init")
    d_a, d_o = env.action_dim, env.obs_dim
    params = {
        "C": rng.normal(0.0, 0.3, size=(ms.d_h, d_a)),
        "D": rng.normal(0.0, 0.3, size=(d_o, ms.d_h + ms.d_z)),
        "Eo": rng.normal(0.0, 0.3, size=(ms.d_z, d_o)),
        "obs_logvar": np.full(d_o, np.log(0.05)),
        "enc_logvar": np.full(ms.d_z, np.log(0.1)),
        "prior_logvar": np.full(ms.d_z, np.log(0.1)),
        "A": 0.9 * np.eye(ms.d_h),
    }
    if ms.family == "linear":
        return LinearGaussianRSSM(ms.d_h, ms.d_z, d_a, d_o, params=params)
    return NonlinearGaussianRSSM(ms.d_h, ms.d_z, d_a, d_o, rng, hidden=ms.hidden, params=params)


def build_agent(cfg: ExperimentConfig, env, seed: int) -> Agent:
    model = build_model(cfg, env, seed)
    in_dim = model.d_h + model.d_z
    critics = CriticEnsemble.create(
        in_dim, cfg.value.E, seed, hidden=cfg.nets.critic_hidden, lr=cfg.schedule.critic_lr, out_scale=cfg.nets.critic_out_scale
    )
    actor = GaussianActor.create(in_dim, env.bounds, seed, hidden=cfg.nets.actor_hidden, init_std=cfg.nets.actor_init_std, lr=cfg.schedule.actor_lr)
    return Agent(model, critics, actor, RunningNormalizer(), cfg.planner, cfg.value, env.bounds)


# -- checkpoints --------------------------------------------------------------


def checkpoint_dict(cfg: ExperimentConfig, agent: Agent, seed: int) -> dict[str, Any]:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_hash": cfg.hash,
        "config": cfg.canonical(),
        "seed": seed,
        "model": agent.model.to_dict(),
        "critics": agent.critics.to_dict(),
        "actor": agent.actor.to_dict(),
        "normalizer": agent.normalizer.to_dict(),
    }


def load_checkpoint(path: str | Path) -> tuple[ExperimentConfig, Agent, int]:
    """Rebuild the config and agent stored in a checkpoint, verifying the config hash."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError("not a supported checkpoint document")
    cfg = from_canonical(d["config"])
    if cfg.hash != d["config_hash"]:
        raise CheckpointError(f"config hash mismatch: stored {d['config_hash']}, recomputed {cfg.hash}")
    env = build_env(cfg)
    seed = int(d["seed"])
    agent = build_agent(cfg, env, seed)
    if d["model"].get("format") == "gaussian-rssm":
        agent.model = GaussianRSSM.from_dict(d["model"])
    agent.critics = CriticEnsemble.from_dict(d["critics"])
    agent.actor = GaussianActor.from_dict(d["actor"])
    agent.normalizer = RunningNormalizer.from_dict(d["normalizer"])
    return cfg, agent, seed


# -- running ------------------------------------------------------------------


def _fmt(x: Any) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def metrics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def _json_default(o: Any):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


@dataclass
class SeedOutcome:
    seed: int
    run_dir: Path
    rows: list[dict]
    evals: list[dict]
    status: str
    seconds: float
    lambda_split: tuple[float, float] = (float("nan"), float("nan"))

    def final_eval(self) -> float:
        """Mean return of the last evaluation round (last-20 training mean if none ran)."""
        if self.evals:
            return float(self.evals[-1]["mean_return"])
        return float(np.mean([r["return"] for r in self.rows[-20:]]))


def run_seed(cfg: ExperimentConfig, seed: int, run_dir: str | Path) -> SeedOutcome:
    """Train one seed and write its run directory.

    On failure the files written so far are kept and the manifest is marked
    ``incomplete`` before the exception propagates.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.canonical())
    t0 = time.perf_counter()
    env = build_env(cfg)
    agent = build_agent(cfg, env, seed)
    rows: list[dict] = []
    manifest = {"config_hash": cfg.hash, "seed": seed, "ablation": cfg.ablation, "status": "running"}
    metrics_path = run_dir / "metrics.csv"
    split: list[tuple[float, float]] = []
    with open(run_dir / "diagnostics.ndjson", "w") as diag:

        def sink(rec: dict) -> None:
            if "lambda_high_sigma" in rec:
                split.append((rec["lambda_high_sigma"], rec["lambda_low_sigma"]))
            diag.write(json.dumps(rec, default=_json_default, sort_keys=True) + "\n")

        def on_episode(row: dict) -> None:
            rows.append(row)

        try:
            result = train_loop(env, agent, cfg.schedule, SeedSpec(seed), diag_sink=sink, on_episode=on_episode)
        except BaseException as exc:
            metrics_path.write_text(metrics_csv(rows))
            manifest.update(status="incomplete", error=f"{type(exc).__name__}: {exc}", episodes=len(rows))
            (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
            raise
        for ev in result.evals:
            sink({"phase": "eval_summary", **ev})
    metrics_path.write_text(metrics_csv(result.rows))
    ckpt = checkpoint_dict(cfg, agent, seed)
    (run_dir / "checkpoint.json").write_text(json.dumps(ckpt, default=_json_default))
    seconds = time.perf_counter() - t0
    returns = [r["return"] for r in result.rows]
    manifest.update(
        status="complete",
        episodes=len(result.rows),
        env_steps=result.rows[-1]["env_step"] if result.rows else 0,
        final_returns_mean=float(np.mean(returns[-20:])) if returns else None,
        evals=[{"episode": e["episode"], "mean_return": e["mean_return"]} for e in result.evals],
        files=list(RUN_FILES),
        wall_seconds=seconds,
    )
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    lam = np.array(split, dtype=np.float64).reshape(-1, 2)
    lam_split = tuple(float(np.nanmean(lam[:, i])) if np.isfinite(lam[:, i]).any() else float("nan") for i in range(2))
    return SeedOutcome(seed, run_dir, result.rows, result.evals, "complete", seconds, lam_split)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> list[SeedOutcome]:
    """Run every seed of ``cfg`` into ``out_dir/seed_<n>``; also writes the resolved config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.txt").write_text(cfg.canonical())
    return [run_seed(cfg, s, out_dir / f"seed_{s}") for s in cfg.seeds]


# -- replay -------------------------------------------------------------------


def replay(checkpoint: str | Path, env_seed: int, steps: int, no_plan: bool = False, episode: int = 0) -> list[dict]:
    """Act (without learning) from a checkpoint and return one record per step.

    Streams are keyed exactly like training episode ``episode`` of a run with
    master seed ``env_seed``, so a checkpoint of an untouched agent replayed on
    its training seed reproduces that episode's actions.
    """
    cfg, agent, _ = load_checkpoint(checkpoint)
    env = build_env(cfg)
    use_plan = cfg.schedule.plan and not no_plan
    root = StreamKey(SeedSpec(env_seed))
    out: list[dict] = []
    ep = episode
    while len(out) < steps:
        res = run_episode(
            env, agent, root.child(0, ep), use_plan, workers=cfg.schedule.workers, keep_trace=True, episode=ep
        )
        for t, (a, b, r) in enumerate(zip(res.actions, res.beliefs, res.rewards)):
            out.append({"episode": ep, "step": t, "action": a.tolist(), "h": b.h.tolist(), "z": b.z.tolist(), "reward": r})
            if len(out) >= steps:
                break
        ep += 1
    return out


def belief_from_record(rec: dict) -> Belief:
    return Belief(np.asarray(rec["h"]), np.asarray(rec["z"]))
