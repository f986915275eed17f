"""Outer online loop: filter, plan, act, store, then update model, critics and actor."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from ..core import ActionBounds, Array, Belief, PlannerConfig, SeedSpec, StreamKey, ValueConfig
from ..planner import ModeSet, plan
from ..value import CriticEnsemble, RunningNormalizer
from ..worldmodel.inference import filter_batch, filter_step
from ..worldmodel.rssm import GaussianRSSM, LatentModel
from .actor import UniformActor
from .replay import ReplayBuffer
from .updates import ModelTrainer, actor_update, attach_returns, critic_update, imagine_rollouts

METRIC_COLUMNS = ("episode", "env_step", "return", "elbo", "critic_loss", "actor_obj", "mean_lambda", "plan_ms")


@dataclass(frozen=True)
class Schedule:
    """How many episodes to run and how learning is interleaved with acting."""

    episodes: int = 200
    warmup_steps: int = 1000
    model_updates: int = 1
    critic_updates: int = 1
    actor_updates: int = 1
    update_every: int = 1
    batch_size: int = 64
    seq_len: int = 8
    capacity: int = 100_000
    model_lr: float = 1e-3
    critic_lr: float = 3e-4
    actor_lr: float = 3e-4
    entropy_coef: float = 3e-4
    eval_every: int = 0
    eval_episodes: int = 10
    final_eval: bool = False
    plan: bool = True
    learn_model: bool = True
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self) -> None:
        if self.episodes < 0 or self.warmup_steps < 0:
            raise ValueError("episodes and warmup_steps must be >= 0")
        if self.update_every < 1 or self.batch_size < 1 or self.seq_len < 1:
            raise ValueError("update_every, batch_size and seq_len must be >= 1")
        if self.eval_every < 0 or self.eval_episodes < 1:
            raise ValueError("eval_every must be >= 0 and eval_episodes >= 1")


@dataclass
class Agent:
    """Everything the loop acts and learns with."""

    model: LatentModel
    critics: CriticEnsemble
    actor: Any
    normalizer: RunningNormalizer
    pcfg: PlannerConfig
    vcfg: ValueConfig
    bounds: ActionBounds

    def act(
        self,
        belief: Belief,
        streams: StreamKey,
        modes: ModeSet | None,
        use_plan: bool,
        explore: bool = True,
        workers: int = 1,
        update_normalizer: bool = True,
    ) -> tuple[Array, ModeSet | None, dict | None]:
        if use_plan:
            res = plan(
                belief, self.model, self.critics, self.actor, self.normalizer, self.pcfg, self.vcfg, streams,
                modes=modes, bounds=self.bounds, workers=workers, update_normalizer=update_normalizer,
            )
            return res.action, res.modes, res.diagnostics
        x = belief.stacked()[None]
        if explore:
            a, _, _ = self.actor.sample(x, streams.derive("act"))
        else:
            a = self.actor.mean_action(x)
        return a[0], None, None


@dataclass
class EpisodeResult:
    episode: int
    env_step: int
    ret: float
    steps: int
    actions: list[Array] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    beliefs: list[Belief] = field(default_factory=list)
    plan_ms: float = 0.0
    lambdas: list[float] = field(default_factory=list)


def run_episode(
    env,
    agent: Agent,
    streams: StreamKey,
    use_plan: bool,
    explore: bool = True,
    random_actor: UniformActor | None = None,
    workers: int = 1,
    update_normalizer: bool = True,
    on_step: Callable[[int, Array | None, float, Array | None], None] | None = None,
    diag_sink: Callable[[dict], None] | None = None,
    episode: int = 0,
    env_step: int = 0,
    keep_trace: bool = False,
) -> EpisodeResult:
    """Play one episode, keeping the belief with the posterior filter.

    ``on_step(step, obs, reward, action)`` is called for every visited state,
    with the action taken from it (``None`` for the terminal state); callers
    use it to fill replay and trigger learning.
    """
    model = agent.model
    obs, r0 = env.reset(streams.derive("env"))
    filt = streams.derive("filter")
    h = np.zeros(model.d_h)
    z, _, _ = filter_step(model, h, obs, filt)
    modes = None
    res = EpisodeResult(episode, env_step, 0.0, 0)
    done = False
    t = 0
    while not done:
        belief = Belief(h, z)
        if random_actor is not None:
            a, _, _ = random_actor.sample(belief.stacked(), streams.derive("warmup", t))
            a, diag = a[0], None
        else:
            t0 = time.perf_counter()
            a, modes, diag = agent.act(belief, streams.child(t), modes, use_plan, explore, workers, update_normalizer)
            res.plan_ms += (time.perf_counter() - t0) * 1e3
        if on_step is not None:
            on_step(t, obs, r0 if t == 0 else reward, a)
        if diag is not None:
            res.lambdas.append(float(np.mean(diag["mean_lambda_by_depth"])) if diag["mean_lambda_by_depth"] else float("nan"))
            if diag_sink is not None:
                diag_sink({"episode": episode, "step": t, "action": np.asarray(a).tolist(), **diag})
        if keep_trace:
            res.actions.append(np.array(a))
            res.beliefs.append(belief)
        obs, reward, done = env.step(a)
        res.ret += reward
        if keep_trace:
            res.rewards.append(reward)
        h = model.transition(h[None], z[None], np.asarray(a)[None])[0]
        z, _, _ = filter_step(model, h, obs, filt)
        t += 1
    if on_step is not None:
        on_step(t, obs, reward, None)
    res.steps = t
    res.env_step = env_step + t
    return res


@dataclass
class LoopMetrics:
    rows: list[dict] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)


class Learner:
    """Replay plus the three update rules, run at the schedule's ratios."""

    def __init__(self, agent: Agent, schedule: Schedule, d_o: int):
        self.agent = agent
        self.schedule = schedule
        self.replay = ReplayBuffer(schedule.capacity, d_o, agent.model.d_a)
        learnable = schedule.learn_model and isinstance(agent.model, GaussianRSSM)
        self.trainer = ModelTrainer(agent.model, lr=schedule.model_lr) if learnable else None
        self.stats: dict[str, list[float]] = {"elbo": [], "critic_loss": [], "actor_obj": [], "lambda": []}

    def reset_stats(self) -> None:
        for v in self.stats.values():
            v.clear()

    def update(self, rng: np.random.Generator) -> None:
        s, ag = self.schedule, self.agent
        if self.replay._valid_starts(s.seq_len).size == 0:
            return
        for _ in range(s.model_updates if self.trainer is not None else 0):
            batch = self.replay.sample(s.batch_size, s.seq_len, rng)
            self.stats["elbo"].append(self.trainer.step(batch, rng))
        n_ac = max(s.critic_updates, s.actor_updates)
        for i in range(n_ac):
            seqs = self.replay.sample(s.batch_size, s.seq_len, rng)
            eps = rng.standard_normal(seqs.obs.shape[:2] + (ag.model.d_z,))
            hs, zs = filter_batch(ag.model, seqs.obs, seqs.mask, seqs.actions, eps)
            imag = imagine_rollouts(ag.model, ag.actor, hs[:, -1], zs[:, -1], ag.pcfg.H, rng)
            attach_returns(imag, ag.critics, ag.normalizer, ag.vcfg)
            ag.normalizer.update(imag.returns.ucb[:, :-1])
            self.stats["lambda"].append(float(imag.returns.lambdas.mean()) if imag.returns.lambdas.size else float("nan"))
            if i < s.critic_updates:
                self.stats["critic_loss"].append(critic_update(ag.critics, imag, s.critic_lr))
            if i < s.actor_updates and hasattr(ag.actor, "logp_grad"):
                self.stats["actor_obj"].append(actor_update(ag.actor, imag, s.actor_lr, s.entropy_coef))


def _mean(xs: list[float]) -> float:
    return float(np.mean(xs)) if xs else float("nan")


def train_loop(
    env,
    agent: Agent,
    schedule: Schedule,
    seed: SeedSpec | int,
    diag_sink: Callable[[dict], None] | None = None,
    on_episode: Callable[[dict], None] | None = None,
) -> LoopMetrics:
    """Run ``schedule.episodes`` training episodes (plus periodic frozen evaluations).

    Returns one metrics row per training episode with the columns of
    ``METRIC_COLUMNS`` and one record per evaluation round.
    """
    spec = seed if isinstance(seed, SeedSpec) else SeedSpec(seed)
    root = StreamKey(spec)
    learner = Learner(agent, schedule, env.obs_dim)
    uniform = UniformActor(agent.bounds)
    metrics = LoopMetrics()
    env_steps = 0
    for ep in range(schedule.episodes):
        learner.reset_stats()
        upd_rng = root.derive("update", ep)
        warm = env_steps < schedule.warmup_steps

        def on_step(t: int, obs, reward: float, action) -> None:
            learner.replay.add(ep, t, obs, reward)
            if action is not None:
                learner.replay.set_last_action(action)
            step_no = env_steps + t
            if step_no >= schedule.warmup_steps and t > 0 and step_no % schedule.update_every == 0:
                learner.update(upd_rng)

        sink = None
        if diag_sink is not None:
            sink = lambda rec: diag_sink({"phase": "train", **rec})  # noqa: E731
        res = run_episode(
            env, agent, root.child(0, ep), schedule.plan,
            random_actor=uniform if warm else None, workers=schedule.workers,
            on_step=on_step, diag_sink=sink, episode=ep, env_step=env_steps,
        )
        env_steps = res.env_step
        lam = learner.stats["lambda"] if not res.lambdas else res.lambdas
        row = {
            "episode": ep,
            "env_step": env_steps,
            "return": res.ret,
            "elbo": _mean(learner.stats["elbo"]),
            "critic_loss": _mean(learner.stats["critic_loss"]),
            "actor_obj": _mean(learner.stats["actor_obj"]),
            "mean_lambda": _mean(lam),
            "plan_ms": res.plan_ms if schedule.record_timing else 0.0,
        }
        metrics.rows.append(row)
        if on_episode is not None:
            on_episode(row)
        if schedule.eval_every and (ep + 1) % schedule.eval_every == 0:
            metrics.evals.append(evaluate(env, agent, schedule, root, ep, env_steps, diag_sink))
    if schedule.final_eval:
        metrics.evals.append(evaluate(env, agent, schedule, root, schedule.episodes, env_steps, diag_sink))
    return metrics


def evaluate(env, agent: Agent, schedule: Schedule, root: StreamKey, episode: int, env_step: int, diag_sink=None) -> dict:
    """Frozen-policy evaluation: no learning, and the agent is left untouched.

    Each episode plans with its own copy of the normalizer, which tracks that
    episode's rollouts exactly as during training and is then discarded.
    """
    returns = []
    for i in range(schedule.eval_episodes):
        sink = None
        if diag_sink is not None:
            sink = lambda rec, i=i: diag_sink({"phase": "eval", "eval_index": i, **rec})  # noqa: E731
        local = replace(agent, normalizer=agent.normalizer.snapshot())
        res = run_episode(
            env, local, root.child(1, episode, i), schedule.plan, explore=False,
            workers=schedule.workers, diag_sink=sink, episode=episode,
        )
        returns.append(res.ret)
    return {"episode": episode, "env_step": env_step, "returns": returns, "mean_return": float(np.mean(returns))}
