import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentmpc.core import Belief, ValueConfig
from latentmpc.nn import Approximator
from latentmpc.oracles import expanded_lambda_return, two_pass_moments
from latentmpc.value import (
    CriticEnsemble,
    EnsembleMoments,
    RunningNormalizer,
    ensemble_moments,
    gated_returns,
    lambda_gate,
    lambda_return,
    lambda_returns,
    moments,
    normalize,
    ucb,
)

from helpers import constant_ensemble


def test_moments_closed_forms():
    m = moments(np.array([[1.0], [3.0]]))
    assert m.mu[0] == 2.0
    assert m.sigma[0] == pytest.approx(np.sqrt(2.0), abs=1e-15)
    same = moments(np.full((5, 2), 4.5))
    np.testing.assert_array_equal(same.sigma, 0.0)
    np.testing.assert_array_equal(same.mu, 4.5)


def test_moments_against_two_pass_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        vals = rng.normal(size=(5, 7)) * rng.uniform(0.1, 10)
        m = moments(vals)
        mu, sd = two_pass_moments(vals)
        np.testing.assert_allclose(m.mu, mu, rtol=0, atol=1e-12)
        np.testing.assert_allclose(m.sigma, sd, rtol=0, atol=1e-12)


def test_ensemble_moments_on_belief():
    ens = constant_ensemble([1.0, 3.0])
    m = ensemble_moments(ens, Belief(np.zeros(2), np.zeros(1)))
    assert m.mu == pytest.approx(2.0)
    assert m.sigma == pytest.approx(np.sqrt(2.0))


def test_ensemble_requires_two_members():
    with pytest.raises(ValueError):
        CriticEnsemble([Approximator([2, 1], np.random.default_rng(0))])
    with pytest.raises(ValueError):
        CriticEnsemble([Approximator([2, 1], np.random.default_rng(0)), Approximator([3, 1], np.random.default_rng(0))])


def test_members_from_distinct_streams_differ():
    ens = CriticEnsemble.create(4, 5, seed=3)
    flats = [m.get_flat() for m in ens.members]
    for i in range(5):
        for j in range(i + 1, 5):
            assert np.linalg.norm(flats[i] - flats[j]) > 0


def test_ucb_examples():
    assert ucb(EnsembleMoments(2.0, 5.0), 0.0) == 2.0
    assert ucb(EnsembleMoments(2.0, np.sqrt(2.0)), 1.0) == 2.0 + np.sqrt(2.0)
    assert ucb(EnsembleMoments(1.5, 0.0), 7.0) == 1.5
    with pytest.raises(ValueError):
        ucb(EnsembleMoments(0.0, 1.0), -1.0)


def test_normalize_examples():
    n = RunningNormalizer(ema_mean=2.0, ema_var=4.0)
    assert normalize(n, 2.0) == 0.5
    assert normalize(n, 2.0 + 3 * 2.0 + 1e-3) == 1.0
    a = normalize(n, 3.3)
    b = normalize(n, 3.3)
    assert a == b and n.ema_mean == 2.0 and n.count == 0


def test_normalizer_update_and_snapshot():
    n = RunningNormalizer()
    normalize(n, np.array([1.0, 3.0]), update=True)
    assert n.ema_mean == 2.0 and n.ema_var == 1.0
    snap = n.snapshot()
    n.update(np.array([10.0, 10.0]))
    assert snap.ema_mean == 2.0
    assert n.ema_mean == pytest.approx(0.99 * 2.0 + 0.01 * 10.0)


@given(st.floats(-1e12, 1e12), st.floats(-1e3, 1e3), st.floats(1e-6, 1e3))
def test_normalizer_range(raw, mean, var):
    out = RunningNormalizer(mean, var)(raw)
    assert 0.0 <= out <= 1.0


def test_lambda_gate_examples():
    cfg = ValueConfig(lambda_min=0.6, lambda_max=0.95)
    assert lambda_gate(0.0, cfg) == 0.95
    assert lambda_gate(1.0, cfg) == pytest.approx(0.6)
    fixed = ValueConfig(lambda_min=0.8, lambda_max=0.8)
    assert all(lambda_gate(u, fixed) == 0.8 for u in np.linspace(0, 1, 11))


@given(st.floats(0, 1), st.floats(0, 1))
def test_lambda_gate_monotone(u1, u2):
    cfg = ValueConfig()
    lo, hi = min(u1, u2), max(u1, u2)
    assert lambda_gate(hi, cfg) <= lambda_gate(lo, cfg)
    assert cfg.lambda_min - 1e-12 <= lambda_gate(u1, cfg) <= cfg.lambda_max + 1e-12


def test_lambda_return_reductions():
    rng = np.random.default_rng(0)
    r, mu = rng.normal(size=6), rng.normal(size=6)
    g = 0.9
    G = lambda_returns(r, mu, np.ones(5), g)
    expect = sum(g**t * r[t] for t in range(5)) + g**5 * mu[5]
    assert G[0] == pytest.approx(expect, abs=1e-12)
    G0 = lambda_returns(r, mu, np.zeros(5), g)
    np.testing.assert_allclose(G0[:-1], r[:-1] + g * mu[1:], atol=1e-14)


def test_lambda_return_against_expansion():
    rng = np.random.default_rng(2)
    for _ in range(50):
        H = 5
        r, mu, lam = rng.normal(size=H), rng.normal(size=H), rng.uniform(size=H - 1)
        tr = lambda_return(r, mu, lam, 0.97)
        for t in range(H):
            assert abs(tr.returns[t] - expanded_lambda_return(r, mu, lam, 0.97, t)) < 1e-10


def test_lambda_return_boundary_and_errors():
    r, mu = np.array([1.0]), np.array([2.5])
    assert lambda_returns(r, mu, np.zeros(0), 0.9)[0] == 2.5
    with pytest.raises(ValueError):
        lambda_returns(np.ones(3), np.ones(3), np.ones(3), 0.9)
    with pytest.raises(ValueError):
        lambda_returns(np.ones(3), np.ones(2), np.ones(2), 0.9)


@settings(max_examples=50)
@given(st.integers(1, 7), st.integers(0, 10_000))
def test_terminal_return_is_bootstrap_exactly(H, seed):
    rng = np.random.default_rng(seed)
    r, mu, lam = rng.normal(size=H), rng.normal(size=H), rng.uniform(size=H - 1)
    assert lambda_returns(r, mu, lam, 0.99)[-1] == mu[-1]


@settings(max_examples=50)
@given(st.integers(2, 7), st.integers(0, 10_000), st.data())
def test_return_affine_in_single_lambda(H, seed, data):
    rng = np.random.default_rng(seed)
    r, mu, lam = rng.normal(size=H), rng.normal(size=H), rng.uniform(size=H - 1)
    k = data.draw(st.integers(0, H - 2))
    x = data.draw(st.floats(0, 1))

    def g0(v):
        l2 = lam.copy()
        l2[k] = v
        return lambda_returns(r, mu, l2, 0.95)[0]

    assert g0(x) == pytest.approx((1 - x) * g0(0.0) + x * g0(1.0), abs=1e-9)


def test_gated_returns_constant_critics():
    ens = constant_ensemble([0.7, 0.7, 0.7], in_dim=3)
    rng = np.random.default_rng(0)
    N, H = 4, 5
    out = gated_returns(rng.normal(size=(N, H)), rng.normal(size=(N, H, 2)), rng.normal(size=(N, H, 1)), ens, RunningNormalizer(0.1, 2.0), ValueConfig(beta=3.0))
    np.testing.assert_allclose(out.sigmas, 0.0, atol=1e-15)
    np.testing.assert_allclose(out.ucb, 0.7, atol=1e-12)
    assert np.ptp(out.lambdas) < 1e-12


def test_gated_returns_full_lambda_zero_critic():
    ens = constant_ensemble([0.0, 0.0], in_dim=3)
    rng = np.random.default_rng(1)
    rew = rng.normal(size=(3, 4))
    out = gated_returns(rew, np.zeros((3, 4, 2)), np.zeros((3, 4, 1)), ens, RunningNormalizer(), ValueConfig(lambda_min=1.0, lambda_max=1.0, gamma=0.9))
    expect = sum(0.9**t * rew[:, t] for t in range(3))
    np.testing.assert_allclose(out.returns[:, 0], expect, atol=1e-12)
