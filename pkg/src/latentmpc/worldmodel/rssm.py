"""Gaussian recurrent state-space models.

All model methods are batched: ``h`` is ``(N, d_h)``, ``z`` is ``(N, d_z)``,
actions ``(N, d_a)`` and observations ``(N, d_o)``. A model is read-only
while it is used for planning, so any number of callers may roll it out
concurrently.

Component layout shared by both families::

    encoder    z ~ N(Eh h + Eo o + e0, exp(enc_logvar))
    transition h' = A h + B z + C a + b [+ net([h, z, a])]
    prior      z ~ N(W h + w0, exp(prior_logvar))
    decoder    o ~ N(D [h; z] + d0, exp(obs_logvar))
    reward     r ~ N(rw . [h; z] + rb [+ net([h, z])], 1)
"""

from __future__ import annotations

import json
from typing import Protocol

import numpy as np

from ..core import Array
from ..nn import Approximator

LOG_2PI = float(np.log(2 * np.pi))
MODEL_FORMAT_VERSION = 1

LINEAR_PARAMS = (
    "A", "B", "C", "b",
    "W", "w0", "prior_logvar",
    "D", "d0", "obs_logvar",
    "rw", "rb",
    "Eh", "Eo", "e0", "enc_logvar",
)


class LatentModel(Protocol):
    """What the filter, the planner and the learner need from a world model."""

    d_h: int
    d_z: int
    d_a: int
    d_o: int

    def encode(self, h: Array, o: Array) -> tuple[Array, Array]: ...
    def transition(self, h: Array, z: Array, a: Array) -> Array: ...
    def prior(self, h: Array) -> tuple[Array, Array]: ...
    def decode(self, h: Array, z: Array) -> tuple[Array, Array]: ...
    def reward(self, h: Array, z: Array) -> Array: ...


def gauss_logpdf(x: Array, mean: Array, var: Array) -> Array:
    """Elementwise diagonal Gaussian log-density (not summed)."""
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def kl_diag(m_q: Array, v_q: Array, m_p: Array, v_p: Array) -> Array:
    """KL(N(m_q, v_q) || N(m_p, v_p)) for diagonal Gaussians, summed over the last axis."""
    return 0.5 * np.sum(np.log(v_p) - np.log(v_q) + (v_q + (m_q - m_p) ** 2) / v_p - 1.0, axis=-1)


class GaussianRSSM:
    """Affine-Gaussian RSSM, optionally with tanh-MLP residuals on the transition and reward.

    Args:
        d_h, d_z, d_a, d_o: memory, latent, action and observation sizes.
        params: initial values for any of ``LINEAR_PARAMS``; missing entries
            take neutral defaults (identity memory, zero maps, unit variances).
        trans_net: residual network ``[h, z, a] -> d_h`` or ``None``.
        reward_net: residual network ``[h, z] -> 1`` or ``None``.
        model_reward: whether the reward channel is part of the likelihood.
    """

    family = "gaussian"

    def __init__(
        self,
        d_h: int,
        d_z: int,
        d_a: int,
        d_o: int,
        params: dict[str, Array] | None = None,
        trans_net: Approximator | None = None,
        reward_net: Approximator | None = None,
        model_reward: bool = True,
    ):
        self.d_h, self.d_z, self.d_a, self.d_o = d_h, d_z, d_a, d_o
        self.model_reward = model_reward
        self.trans_net = trans_net
        self.reward_net = reward_net
        shapes = self.param_shapes()
        p = {
            "A": np.eye(d_h), "B": np.zeros((d_h, d_z)), "C": np.zeros((d_h, d_a)), "b": np.zeros(d_h),
            "W": np.zeros((d_z, d_h)), "w0": np.zeros(d_z), "prior_logvar": np.zeros(d_z),
            "D": np.zeros((d_o, d_h + d_z)), "d0": np.zeros(d_o), "obs_logvar": np.zeros(d_o),
            "rw": np.zeros(d_h + d_z), "rb": np.zeros(1),
            "Eh": np.zeros((d_z, d_h)), "Eo": np.zeros((d_z, d_o)), "e0": np.zeros(d_z), "enc_logvar": np.zeros(d_z),
        }
        for k, v in (params or {}).items():
            if k not in p:
                raise KeyError(f"unknown parameter {k!r}")
            v = np.array(v, dtype=np.float64).reshape(shapes[k])
            p[k] = v
        self.p = p
        self.check()

    # -- parameter bookkeeping ------------------------------------------------

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        d_h, d_z, d_a, d_o = self.d_h, self.d_z, self.d_a, self.d_o
        return {
            "A": (d_h, d_h), "B": (d_h, d_z), "C": (d_h, d_a), "b": (d_h,),
            "W": (d_z, d_h), "w0": (d_z,), "prior_logvar": (d_z,),
            "D": (d_o, d_h + d_z), "d0": (d_o,), "obs_logvar": (d_o,),
            "rw": (d_h + d_z,), "rb": (1,),
            "Eh": (d_z, d_h), "Eo": (d_z, d_o), "e0": (d_z,), "enc_logvar": (d_z,),
        }

    def check(self) -> None:
        for k, shape in self.param_shapes().items():
            if self.p[k].shape != shape:
                raise ValueError(f"parameter {k} has shape {self.p[k].shape}, expected {shape}")
        for k in ("prior_logvar", "obs_logvar", "enc_logvar"):
            if not np.all(np.isfinite(self.p[k])):
                raise ValueError(f"non-finite log-variance in {k}")

    def param_list(self) -> list[Array]:
        """All trainable arrays in a fixed order (linear parameters, then networks)."""
        out = [self.p[k] for k in LINEAR_PARAMS]
        for net in (self.trans_net, self.reward_net):
            if net is not None:
                out.extend(net.params)
        return out

    def get_flat(self) -> Array:
        return np.concatenate([x.ravel() for x in self.param_list()])

    def set_flat(self, flat: Array) -> None:
        i = 0
        for x in self.param_list():
            x[...] = flat[i : i + x.size].reshape(x.shape)
            i += x.size

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.p = {k: v.copy() for k, v in self.p.items()}
        new.trans_net = self.trans_net.copy() if self.trans_net is not None else None
        new.reward_net = self.reward_net.copy() if self.reward_net is not None else None
        return new

    @property
    def prior_var(self) -> Array:
        return np.exp(self.p["prior_logvar"])

    @property
    def enc_var(self) -> Array:
        return np.exp(self.p["enc_logvar"])

    @property
    def R(self) -> Array:
        """Observation noise covariance (diagonal)."""
        return np.diag(np.exp(self.p["obs_logvar"]))

    # -- model components -----------------------------------------------------

    def encode(self, h: Array, o: Array) -> tuple[Array, Array]:
        p = self.p
        mean = h @ p["Eh"].T + o @ p["Eo"].T + p["e0"]
        return mean, np.broadcast_to(self.enc_var, mean.shape)

    def transition(self, h: Array, z: Array, a: Array) -> Array:
        p = self.p
        out = h @ p["A"].T + z @ p["B"].T + a @ p["C"].T + p["b"]
        if self.trans_net is not None:
            out = out + self.trans_net(np.concatenate([h, z, a], axis=-1))
        return out

    def prior(self, h: Array) -> tuple[Array, Array]:
        mean = h @ self.p["W"].T + self.p["w0"]
        return mean, np.broadcast_to(self.prior_var, mean.shape)

    def decode(self, h: Array, z: Array) -> tuple[Array, Array]:
        mean = np.concatenate([h, z], axis=-1) @ self.p["D"].T + self.p["d0"]
        return mean, np.broadcast_to(np.exp(self.p["obs_logvar"]), mean.shape)

    def reward(self, h: Array, z: Array) -> Array:
        x = np.concatenate([h, z], axis=-1)
        out = x @ self.p["rw"] + self.p["rb"][0]
        if self.reward_net is not None:
            out = out + self.reward_net(x)[..., 0]
        return out

    # -- variational objective ------------------------------------------------

    def elbo_terms(
        self,
        obs: Array,
        mask: Array,
        actions: Array,
        rewards: Array | None,
        eps: Array,
        grad: bool = False,
    ):
        """Reparameterized single-sample ELBO for a batch of sequences.

        Args:
            obs: ``(N, T+1, d_o)`` observations; rows where ``mask`` is False are ignored.
            mask: ``(N, T+1)`` True where the observation is present.
            actions: ``(N, T, d_a)``.
            rewards: ``(N, T+1)`` or ``None`` (reward channel skipped).
            eps: ``(N, T+1, d_z)`` standard-normal noise driving the posterior samples.
            grad: also return gradients of the batch-mean ELBO.

        Returns:
            ``(elbo, kl)`` with per-sequence ELBO ``(N,)`` and per-step KL
            ``(N, T+1)``; with ``grad=True`` a list of gradients aligned with
            ``param_list()`` is appended.
        """
        p = self.p
        N, T1, _ = obs.shape
        use_r = rewards is not None and self.model_reward
        pv = self.prior_var
        ev = self.enc_var
        ov = np.exp(p["obs_logvar"])
        obs = np.where(mask[..., None], obs, 0.0)
        h = np.zeros((N, self.d_h))
        total = np.zeros(N)
        kls = np.zeros((N, T1))
        cache = []
        for t in range(T1):
            m_t = mask[:, t]
            pm = h @ p["W"].T + p["w0"]
            em = h @ p["Eh"].T + obs[:, t] @ p["Eo"].T + p["e0"]
            z = np.where(m_t[:, None], em + np.sqrt(ev) * eps[:, t], pm + np.sqrt(pv) * eps[:, t])
            x = np.concatenate([h, z], axis=1)
            dm = x @ p["D"].T + p["d0"]
            ll_o = np.where(m_t, gauss_logpdf(obs[:, t], dm, ov).sum(-1), 0.0)
            kl = np.where(m_t, kl_diag(em, ev, pm, pv), 0.0)
            total += ll_o - kl
            kls[:, t] = kl
            r_cache = None
            if use_r:
                rm = x @ p["rw"] + p["rb"][0]
                if self.reward_net is not None:
                    rn, r_cache = self.reward_net.forward(x, return_cache=True)
                    rm = rm + rn[:, 0]
                total += gauss_logpdf(rewards[:, t], rm, 1.0)
            else:
                rm = None
            t_cache = None
            step = (h, z, x, pm, em, dm, rm, r_cache)
            if t < T1 - 1:
                a = actions[:, t]
                hn = h @ p["A"].T + z @ p["B"].T + a @ p["C"].T + p["b"]
                if self.trans_net is not None:
                    tn, t_cache = self.trans_net.forward(np.concatenate([h, z, a], axis=1), return_cache=True)
                    hn = hn + tn
                h = hn
            cache.append(step + (t_cache,))
        if not grad:
            return total, kls

        g = {k: np.zeros_like(v) for k, v in p.items()}
        g_tnet = [np.zeros_like(w) for w in self.trans_net.params] if self.trans_net is not None else []
        g_rnet = [np.zeros_like(w) for w in self.reward_net.params] if self.reward_net is not None else []
        g_lpv = np.zeros(self.d_z)
        g_lev = np.zeros(self.d_z)
        scale = 1.0 / N
        gh_next = np.zeros((N, self.d_h))
        for t in reversed(range(T1)):
            h, z, x, pm, em, dm, rm, r_cache, t_cache = cache[t]
            m_t = mask[:, t][:, None].astype(np.float64)
            g_h = np.zeros((N, self.d_h))
            g_z = np.zeros((N, self.d_z))
            if t < T1 - 1:
                a = actions[:, t]
                gh = gh_next
                g["A"] += gh.T @ h
                g["B"] += gh.T @ z
                g["C"] += gh.T @ a
                g["b"] += gh.sum(0)
                g_h += gh @ p["A"]
                g_z += gh @ p["B"]
                if self.trans_net is not None:
                    gw, gin = self.trans_net.backward(t_cache, gh)
                    for acc, gi in zip(g_tnet, gw):
                        acc += gi
                    g_h += gin[:, : self.d_h]
                    g_z += gin[:, self.d_h : self.d_h + self.d_z]
            # decoder
            resid = obs[:, t] - dm
            d_dm = m_t * resid / ov * scale
            g["D"] += d_dm.T @ x
            g["d0"] += d_dm.sum(0)
            g["obs_logvar"] += np.sum(m_t * 0.5 * (resid**2 / ov - 1.0), axis=0) * scale
            g_x = d_dm @ p["D"]
            # reward
            if use_r:
                d_r = (rewards[:, t] - rm) * scale
                g["rw"] += x.T @ d_r
                g["rb"] += d_r.sum()
                g_x += d_r[:, None] * p["rw"]
                if self.reward_net is not None:
                    gw, gin = self.reward_net.backward(r_cache, d_r[:, None])
                    for acc, gi in zip(g_rnet, gw):
                        acc += gi
                    g_x += gin
            g_h += g_x[:, : self.d_h]
            g_z += g_x[:, self.d_h :]
            # -KL on observed rows
            diff = em - pm
            g_em = m_t * (-(diff / pv)) * scale
            g_pm = m_t * (diff / pv) * scale
            g_lev += np.sum(m_t * (-0.5 * (-1.0 + ev / pv)), axis=0) * scale
            g_lpv += np.sum(m_t * (-0.5 * (1.0 - (ev + diff**2) / pv)), axis=0) * scale
            # reparameterized sample
            e_t = eps[:, t]
            g_em += m_t * g_z
            g_lev += np.sum(m_t * g_z * e_t * 0.5 * np.sqrt(ev), axis=0)
            g_pm += (1.0 - m_t) * g_z
            g_lpv += np.sum((1.0 - m_t) * g_z * e_t * 0.5 * np.sqrt(pv), axis=0)
            g["Eh"] += g_em.T @ h
            g["Eo"] += g_em.T @ obs[:, t]
            g["e0"] += g_em.sum(0)
            g_h += g_em @ p["Eh"]
            g["W"] += g_pm.T @ h
            g["w0"] += g_pm.sum(0)
            g_h += g_pm @ p["W"]
            gh_next = g_h
        g["prior_logvar"] += g_lpv
        g["enc_logvar"] += g_lev
        grads = [g[k] for k in LINEAR_PARAMS] + g_tnet + g_rnet
        return total, kls, grads

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "gaussian-rssm",
            "version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "dims": {"d_h": self.d_h, "d_z": self.d_z, "d_a": self.d_a, "d_o": self.d_o},
            "model_reward": self.model_reward,
            "params": {k: self.p[k].tolist() for k in LINEAR_PARAMS},
            "trans_net": self.trans_net.to_dict() if self.trans_net is not None else None,
            "reward_net": self.reward_net.to_dict() if self.reward_net is not None else None,
        }

    @staticmethod
    def from_dict(d: dict) -> GaussianRSSM:
        if d.get("format") != "gaussian-rssm":
            raise ValueError("not a serialized gaussian-rssm document")
        if int(d.get("version", -1)) != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('version')}")
        cls = {"linear": LinearGaussianRSSM, "nonlinear": NonlinearGaussianRSSM}.get(d["family"], GaussianRSSM)
        dims = d["dims"]
        new = object.__new__(cls)
        GaussianRSSM.__init__(
            new,
            dims["d_h"], dims["d_z"], dims["d_a"], dims["d_o"],
            params=d["params"],
            trans_net=Approximator.from_dict(d["trans_net"]) if d.get("trans_net") else None,
            reward_net=Approximator.from_dict(d["reward_net"]) if d.get("reward_net") else None,
            model_reward=bool(d["model_reward"]),
        )
        return new

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


class LinearGaussianRSSM(GaussianRSSM):
    """The affine-Gaussian family, whose evidence is available in closed form."""

    family = "linear"

    def __init__(self, d_h: int, d_z: int, d_a: int, d_o: int, params: dict[str, Array] | None = None, model_reward: bool = True):
        super().__init__(d_h, d_z, d_a, d_o, params=params, model_reward=model_reward)

    @classmethod
    def random(cls, rng: np.random.Generator, d_h: int, d_z: int, d_a: int, d_o: int, model_reward: bool = True) -> LinearGaussianRSSM:
        """A random stable instance (spectral radius of ``A`` below one)."""
        A = rng.normal(size=(d_h, d_h))
        A *= 0.8 / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
        params = {
            "A": A,
            "B": rng.normal(0, 0.5, size=(d_h, d_z)),
            "C": rng.normal(0, 0.5, size=(d_h, d_a)),
            "b": rng.normal(0, 0.1, size=d_h),
            "W": rng.normal(0, 0.5, size=(d_z, d_h)),
            "w0": rng.normal(0, 0.2, size=d_z),
            "prior_logvar": rng.uniform(-1.0, 0.5, size=d_z),
            "D": rng.normal(0, 0.7, size=(d_o, d_h + d_z)),
            "d0": rng.normal(0, 0.2, size=d_o),
            "obs_logvar": rng.uniform(-1.5, 0.0, size=d_o),
            "rw": rng.normal(0, 0.5, size=d_h + d_z),
            "rb": rng.normal(0, 0.2, size=1),
            "Eh": rng.normal(0, 0.3, size=(d_z, d_h)),
            "Eo": rng.normal(0, 0.3, size=(d_z, d_o)),
            "e0": rng.normal(0, 0.2, size=d_z),
            "enc_logvar": rng.uniform(-1.5, 0.0, size=d_z),
        }
        return cls(d_h, d_z, d_a, d_o, params=params, model_reward=model_reward)

    def exact_conditional(self) -> tuple[Array, Array, Array, Array]:
        """Encoder parameters equal to the model's own conditional of ``z`` given ``(h, o)``.

        Returns:
            ``(Eh, Eo, e0, cov)`` where ``cov`` is the full conditional
            covariance (diagonal only when ``D_z^T R^-1 D_z`` is).
        """
        p = self.p
        Dh, Dz = p["D"][:, : self.d_h], p["D"][:, self.d_h :]
        Pinv = np.diag(1.0 / self.prior_var)
        Rinv = np.diag(np.exp(-p["obs_logvar"]))
        S = np.linalg.inv(Pinv + Dz.T @ Rinv @ Dz)
        Eh = S @ (Pinv @ p["W"] - Dz.T @ Rinv @ Dh)
        Eo = S @ Dz.T @ Rinv
        e0 = S @ (Pinv @ p["w0"] - Dz.T @ Rinv @ p["d0"])
        return Eh, Eo, e0, S

    def with_exact_encoder(self) -> LinearGaussianRSSM:
        """Copy whose encoder is the exact conditional (variance = its diagonal)."""
        Eh, Eo, e0, S = self.exact_conditional()
        new = self.copy()
        new.p["Eh"][...] = Eh
        new.p["Eo"][...] = Eo
        new.p["e0"][...] = e0
        new.p["enc_logvar"][...] = np.log(np.diag(S))
        return new


class NonlinearGaussianRSSM(GaussianRSSM):
    """Small nonlinear family: affine backbone plus tanh-MLP residuals on transition and reward."""

    family = "nonlinear"

    def __init__(
        self,
        d_h: int,
        d_z: int,
        d_a: int,
        d_o: int,
        rng: np.random.Generator,
        hidden: int = 16,
        params: dict[str, Array] | None = None,
        model_reward: bool = True,
        init_scale: float = 0.1,
    ):
        trans_net = Approximator([d_h + d_z + d_a, hidden, d_h], rng, out_scale=init_scale)
        reward_net = Approximator([d_h + d_z, hidden, 1], rng, out_scale=init_scale)
        super().__init__(d_h, d_z, d_a, d_o, params=params, trans_net=trans_net, reward_net=reward_net, model_reward=model_reward)
