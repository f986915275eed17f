import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentmpc.core import ActionBounds, Belief, PlannerConfig, SeedSpec, StreamKey, ValueConfig, clip_actions
from latentmpc.learner.actor import GaussianActor
from latentmpc.oracles import grid_search_constant_action, weighted_stats
from latentmpc.planner import (
    ModeSet,
    ProposalMode,
    global_best,
    init_modes,
    mode_weights,
    plan,
    policy_sequence,
    reweight_and_update,
    sample_candidates,
    score_candidates,
    update_mode,
    warm_start_shift,
)
from latentmpc.value import CriticEnsemble, RunningNormalizer
from latentmpc.worldmodel import MultiGoalReacher, PointMassModel, TwoGapCorridor

from helpers import ToyModel, constant_ensemble, linear_ensemble

B1 = ActionBounds.symmetric(1)
B2 = ActionBounds.symmetric(2)


def modeset(mus, var=0.25):
    mus = [np.asarray(m, dtype=np.float64) for m in mus]
    return ModeSet([ProposalMode(m, np.full(m.shape, var)) for m in mus], (1.0,) * len(mus), np.full(mus[0].shape[1], var))


# -- initialization and warm start --------------------------------------------


def test_init_modes_alpha_endpoints_and_midpoint():
    model = PointMassModel(TwoGapCorridor())
    actor = GaussianActor.create(4, B2, 0)
    belief = Belief(np.zeros(2), np.zeros(2))
    streams = StreamKey(SeedSpec(5))
    cfg = PlannerConfig(H=6, M=3, K=4)  # alphas 1, 0.5, 0
    modes = init_modes(actor, belief, model, cfg, streams, B2)
    a_pi = policy_sequence(actor, belief, model, 6, streams.derive("plan-policy"))
    a_rand = [clip_actions(cfg.rand_std * streams.derive("plan-rand", m).standard_normal((6, 2)), B2) for m in range(3)]
    np.testing.assert_array_equal(modes.modes[0].mu, a_pi)
    np.testing.assert_array_equal(modes.modes[2].mu, a_rand[2])
    np.testing.assert_allclose(modes.modes[1].mu, 0.5 * a_pi + 0.5 * a_rand[1], atol=1e-15)


def test_warm_start_shift_examples():
    ms = modeset([[[1.0], [2.0]]])
    np.testing.assert_array_equal(warm_start_shift(ms).modes[0].mu, [[2.0], [2.0]])
    const = modeset([np.full((5, 2), 0.3)])
    np.testing.assert_array_equal(warm_start_shift(const).modes[0].mu, const.modes[0].mu)
    ms = modeset([np.arange(6.0).reshape(6, 1)])
    for _ in range(6):
        ms = warm_start_shift(ms)
    np.testing.assert_array_equal(ms.modes[0].mu, 5.0)


# -- sampling ------------------------------------------------------------------


def test_sample_degenerate_variance_gives_mean():
    mode = ProposalMode(np.array([[0.2, -0.4], [1.5, 0.0]]), np.zeros((2, 2)))
    cand = sample_candidates(mode, 8, np.random.default_rng(0), B2)
    np.testing.assert_array_equal(cand, np.broadcast_to(clip_actions(mode.mu), cand.shape))


def test_sample_mean_monte_carlo():
    mu = np.array([[0.1, -0.2], [0.3, 0.0], [-0.05, 0.2]])
    mode = ProposalMode(mu, np.full(mu.shape, 0.04))
    cand = sample_candidates(mode, 100_000, np.random.default_rng(1), clip=False)
    se = cand.std(axis=0, ddof=1) / math.sqrt(cand.shape[0])
    assert np.all(np.abs(cand.mean(axis=0) - mu) < 3 * se)


def test_samples_within_bounds():
    mode = ProposalMode(np.full((4, 2), 0.9), np.full((4, 2), 4.0))
    cand = sample_candidates(mode, 500, np.random.default_rng(2), B2)
    assert np.all(np.abs(cand) <= 1.0)
    with pytest.raises(ValueError):
        sample_candidates(mode, 1, np.random.default_rng(0))


# -- scoring --------------------------------------------------------------------


def test_score_constant_critics():
    model = PointMassModel(TwoGapCorridor())
    ens = constant_ensemble([1.25, 1.25, 1.25], in_dim=4)
    cand = np.random.default_rng(0).uniform(-1, 1, (6, 5, 2))
    eps = np.random.default_rng(1).standard_normal((6, 5, 2))
    out = score_candidates(cand, Belief(np.zeros(2), np.zeros(2)), model, ens, RunningNormalizer(0.0, 4.0), ValueConfig(beta=2.0), eps)
    np.testing.assert_allclose(out.gated.sigmas, 0.0, atol=1e-14)
    np.testing.assert_allclose(out.gated.ucb, 1.25, atol=1e-12)
    assert np.ptp(out.gated.lambdas) < 1e-12


def test_score_full_lambda_zero_critic_is_discounted_reward_sum():
    model = ToyModel(gain=0.5)
    ens = constant_ensemble([0.0, 0.0], in_dim=2)
    cand = np.random.default_rng(3).uniform(-1, 1, (5, 4, 1))
    eps = np.zeros((5, 4, 1))
    vcfg = ValueConfig(lambda_min=1.0, lambda_max=1.0, gamma=0.9)
    out = score_candidates(cand, Belief([0.2], [0.0]), model, ens, RunningNormalizer(), vcfg, eps)
    want = sum(0.9**t * out.rewards[:, t] for t in range(3))
    np.testing.assert_allclose(out.scores, want, atol=1e-12)


def test_score_matches_hand_expansion():
    model = ToyModel(target=0.3, gain=0.5)
    ens = linear_ensemble([[2.0, 0.0], [-1.0, 0.0]], [0.1, 0.3])
    vcfg = ValueConfig(E=2, beta=0.7, lambda_min=0.6, lambda_max=0.95, gamma=0.97)
    norm = RunningNormalizer(0.2, 0.5)
    a = np.array([0.4, -0.1, 0.25])
    out = score_candidates(a.reshape(1, 3, 1), Belief([0.2], [0.0]), model, ens, norm, vcfg, np.zeros((1, 3, 1)))

    h1 = 0.5 * 0.2 + 0.4
    h2 = 0.5 * h1 - 0.1
    h3 = 0.5 * h2 + 0.25
    r0, r1 = -((h1 - 0.3) ** 2), -((h2 - 0.3) ** 2)

    def mu(h):
        return ((2 * h + 0.1) + (-h + 0.3)) / 2

    def lam(h):
        v1, v2 = 2 * h + 0.1, -h + 0.3
        sd = abs(v1 - v2) / math.sqrt(2)
        u = min(1.0, max(0.0, ((mu(h) + 0.7 * sd - 0.2) / math.sqrt(0.5 + 1e-8) + 3) / 6))
        return 0.95 - 0.35 * u

    g2 = mu(h3)
    g1 = r1 + 0.97 * ((1 - lam(h2)) * mu(h3) + lam(h2) * g2)
    g0 = r0 + 0.97 * ((1 - lam(h1)) * mu(h2) + lam(h1) * g1)
    assert abs(out.scores[0] - g0) < 1e-10


# -- weights and updates ---------------------------------------------------------


def test_global_best_examples():
    assert global_best(np.array([[3.5]])) == (3.5, (0, 0))
    assert global_best(np.array([[1.0, 2.0], [2.0, 0.5]])) == (2.0, (0, 1))
    assert global_best(np.array([[1.0], [2.0], [2.0]])) == (2.0, (1, 0))
    assert global_best(np.full((3, 4), 0.25))[1] == (0, 0)
    with pytest.raises(ValueError):
        global_best(np.zeros((0, 0)))


def test_mode_weight_examples():
    np.testing.assert_array_equal(mode_weights(np.array([4.0]), 4.0, 0.5, 1e-6), [1.0])
    np.testing.assert_allclose(mode_weights(np.full(8, 2.0), 2.0, 0.5, 1e-6), 1 / 8, atol=1e-15)
    w = mode_weights(np.array([2.0, 1.0]), 2.0, 1e-3, 1e-6)
    assert w[0] == pytest.approx(1.0) and w[1] < 1e-100
    with pytest.raises(ValueError):
        mode_weights(np.array([np.nan, 1.0]), 1.0, 0.5, 1e-6)


@settings(max_examples=100)
@given(st.integers(1, 64), st.integers(0, 2**31), st.floats(0.01, 5.0))
def test_weights_sum_to_one(K, seed, tau):
    s = np.random.default_rng(seed).normal(size=K) * 10
    shifted = s - s.min()
    w = mode_weights(shifted, float(shifted.max()), tau, 1e-6)
    assert abs(w.sum() - 1.0) <= 1e-12 and np.all(w >= 0)


def test_update_mode_examples():
    cand = np.array([[[0.5]], [[-0.2]], [[0.9]]])
    out = update_mode(ProposalMode(np.zeros((1, 1)), np.ones((1, 1))), cand, np.array([0.0, 1.0, 0.0]), 1e-4)
    assert out.mu[0, 0] == -0.2 and out.sigma[0, 0] == 1e-4
    two = update_mode(ProposalMode(np.zeros((1, 1)), np.ones((1, 1))), np.array([[[-1.0]], [[1.0]]]), np.array([0.5, 0.5]), 1e-4)
    assert two.mu[0, 0] == 0.0 and two.sigma[0, 0] == 1.0 + 1e-4


def test_update_mode_against_weighted_statistics():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cand = rng.uniform(-1, 1, (32, 5, 2))
        w = rng.random(32)
        w /= w.sum()
        got = update_mode(ProposalMode(np.zeros((5, 2)), np.ones((5, 2))), cand, w, 1e-4)
        mu, var = weighted_stats(cand, w, 1e-4)
        np.testing.assert_allclose(got.mu, mu, rtol=0, atol=1e-12)
        np.testing.assert_allclose(got.sigma, var, rtol=0, atol=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.floats(1e-8, 1e-2))
def test_covariance_floor(seed, eps):
    rng = np.random.default_rng(seed)
    M, K = 3, 16
    ms = modeset([rng.uniform(-1, 1, (4, 2)) for _ in range(M)])
    cand = rng.uniform(-1, 1, (M, K, 4, 2))
    cand[0] = cand[0, :1]  # one mode whose candidates all coincide
    new, weights, _, _ = reweight_and_update(ms, cand, rng.normal(size=(M, K)), PlannerConfig(M=M, K=K, epsilon=eps))
    for m in new.modes:
        assert np.all(m.sigma >= eps)
    np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)


def test_scale_invariance_to_tolerance():
    """Scaling positive scores leaves the refit unchanged up to rounding (tiny delta)."""
    rng = np.random.default_rng(4)
    cfg = PlannerConfig(M=3, K=16, delta=1e-12)
    for _ in range(20):
        ms = modeset([rng.uniform(-1, 1, (4, 2)) for _ in range(3)])
        cand = rng.uniform(-1, 1, (3, 16, 4, 2))
        scores = rng.uniform(0.5, 5.0, (3, 16))
        base = reweight_and_update(ms, cand, scores, cfg)
        for c in (0.1, 10.0):
            other = reweight_and_update(ms, cand, c * scores, cfg)
            np.testing.assert_allclose(other[1], base[1], rtol=1e-9, atol=1e-15)
            assert other[3] == base[3]
            for a, b in zip(other[0].modes, base[0].modes):
                np.testing.assert_allclose(a.mu, b.mu, rtol=0, atol=1e-9)


def test_negative_scores_do_not_invert_preference():
    ms = modeset([np.zeros((1, 1))])
    cand = np.array([[[[0.8]], [[-0.8]]]])
    new, w, g, winner = reweight_and_update(ms, cand, np.array([[-1.0, -5.0]]), PlannerConfig(M=1, K=2, tau=0.1))
    assert winner == (0, 0) and g == -1.0 and w[0, 0] > w[0, 1]
    assert new.modes[0].mu[0, 0] > 0


# -- full planning call -----------------------------------------------------------


def test_unimodal_degenerate_plan_returns_first_mean_action():
    model = ToyModel()
    cfg = PlannerConfig(H=4, M=1, K=8, L=1, sigma_init=1e-12, epsilon=1e-30)
    ens = constant_ensemble([0.0, 0.0], in_dim=2)
    start = ModeSet([ProposalMode(np.full((4, 1), 0.37), np.full((4, 1), 1e-30))], (1.0,), np.full(1, 1e-24))
    res = plan(Belief([0.0], [0.0]), model, ens, None, RunningNormalizer(), cfg, ValueConfig(E=2), StreamKey(SeedSpec(0)), bounds=B1)
    assert res.action[0] == res.modes.modes[0].mu[0, 0]
    assert res.action[0] == pytest.approx(0.0, abs=1e-9)  # fresh modes start at the (absent) policy's zeros
    res2 = plan(
        Belief([0.0], [0.0]), model, ens, None, RunningNormalizer(), PlannerConfig(H=4, M=1, K=8, L=1, sigma_init=1e-12, epsilon=1e-30, warm_blend=0.0),
        ValueConfig(E=2), StreamKey(SeedSpec(0)), modes=start, bounds=B1,
    )
    assert res2.action[0] == pytest.approx(0.37, abs=1e-9)


def test_plan_matches_grid_search_best_constant_action():
    model = ToyModel(target=0.3)
    ens = constant_ensemble([0.0, 0.0], in_dim=2)
    vcfg = ValueConfig(E=2, lambda_min=1.0, lambda_max=1.0, gamma=0.99)
    H = 6

    def constant_score(a):
        h, total = 0.0, 0.0
        for t in range(H - 1):
            h = a[0]
            total += 0.99**t * -((h - 0.3) ** 2)
        return total

    best = grid_search_constant_action(constant_score, -1.0, 1.0)
    cfg = PlannerConfig(H=H, M=4, K=64, L=6, tau=0.05)
    res = plan(Belief([0.0], [0.0]), model, ens, None, RunningNormalizer(), cfg, vcfg, StreamKey(SeedSpec(1)), bounds=B1)
    assert abs(res.action[0] - best) < 0.1


def test_plan_worker_count_does_not_change_result():
    env = TwoGapCorridor()
    model = PointMassModel(env)
    ens = CriticEnsemble.create(4, 3, 0)
    actor = GaussianActor.create(4, B2, 0)
    cfg = PlannerConfig(H=8, M=4, K=40, L=3, chunk_size=16)
    out = []
    for workers in (1, 8):
        norm = RunningNormalizer()
        res = plan(Belief(np.zeros(2), np.zeros(2)), model, ens, actor, norm, cfg, ValueConfig(E=3), StreamKey(SeedSpec(3)), bounds=B2, workers=workers)
        out.append((res.action.tobytes(), [m.mu.tobytes() for m in res.modes.modes], norm.ema_mean))
    assert out[0] == out[1]


def test_plan_diagnostics_and_normalizer_snapshot():
    model = PointMassModel(TwoGapCorridor())
    ens = CriticEnsemble.create(4, 3, 1)
    norm = RunningNormalizer()
    cfg = PlannerConfig(H=5, M=2, K=8, L=3)
    res = plan(Belief(np.zeros(2), np.zeros(2)), model, ens, None, norm, cfg, ValueConfig(E=3), StreamKey(SeedSpec(0)), bounds=B2)
    d = res.diagnostics
    assert len(d["g_star"]) == 3 and len(d["mode_best"]) == 2 and len(d["mean_lambda_by_depth"]) == 4
    assert d["selected_mode"] in (0, 1) and norm.count == 3 * 2 * 8 * 4
    frozen = RunningNormalizer()
    plan(Belief(np.zeros(2), np.zeros(2)), model, ens, None, frozen, cfg, ValueConfig(E=3), StreamKey(SeedSpec(0)), bounds=B2, update_normalizer=False)
    assert frozen.count == 0
    with pytest.raises(ValueError):
        plan(Belief(np.zeros(2), np.zeros(2)), model, ens, None, norm, cfg, ValueConfig(E=3), StreamKey(SeedSpec(0)), modes=modeset([np.zeros((3, 2))]), bounds=B2)


def test_modes_stay_separated_on_reacher():
    env = MultiGoalReacher()
    model = PointMassModel(env)
    ens = constant_ensemble([0.0, 0.0], in_dim=4)
    vcfg = ValueConfig(E=2, lambda_min=1.0, lambda_max=1.0, gamma=0.99)
    cfg = PlannerConfig(H=8, M=3, K=64, L=5)
    dirs = (env.goals - np.asarray(env.spec.start)) / env.spec.goal_distance
    modes = ModeSet([ProposalMode(np.tile(0.8 * d, (8, 1)), np.full((8, 2), 0.09)) for d in dirs], cfg.alpha_schedule, np.full(2, 0.09))
    streams = StreamKey(SeedSpec(2))
    start = Belief(np.zeros(2), np.zeros(2))
    for it in range(cfg.L):
        cand = np.stack([sample_candidates(modes.modes[m], cfg.K, streams.derive("s", m, it), B2) for m in range(3)])
        eps = streams.derive("e", it).standard_normal((3 * cfg.K, 8, 2))
        scores = score_candidates(cand.reshape(-1, 8, 2), start, model, ens, RunningNormalizer(), vcfg, eps).scores.reshape(3, cfg.K)
        modes = reweight_and_update(modes, cand, scores, cfg)[0]
    first = np.array([m.mu[0] for m in modes.modes])
    dists = [np.linalg.norm(first[i] - first[j]) for i in range(3) for j in range(i + 1, 3)]
    assert min(dists) > 0.5


def test_best_score_improves_over_iterations():
    # tau=0.1: at 0.5 the normalized logits span at most 2 nats and the refit is close to plain averaging
    env = TwoGapCorridor()
    model = PointMassModel(env)
    cfg = PlannerConfig(H=10, M=4, K=32, L=5, tau=0.1)
    improved = 0
    runs = 100
    for seed in range(runs):
        ens = CriticEnsemble.create(4, 3, seed, out_scale=0.01)
        res = plan(Belief(np.zeros(2), np.zeros(2)), model, ens, None, RunningNormalizer(), cfg, ValueConfig(E=3), StreamKey(SeedSpec(seed)), bounds=B2)
        g = res.diagnostics["g_star"]
        improved += np.polyfit(np.arange(len(g)), g, 1)[0] >= 0
    assert improved >= 0.9 * runs
