"""Tanh-squashed diagonal Gaussian policy."""
from __future__ import annotations

import numpy as np

from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.mlp import Mlp

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_LOG2 = np.log(2.0)


def _log1m_tanh_sq(u):
    """``log(1 - tanh(u)^2)`` computed stably."""
    if isinstance(u, Tensor):
        return 2.0 * (_LOG2 - u - ad.softplus(-2.0 * u))
    return 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))


class SquashedGaussianPolicy:
    """``a = low + (tanh(u) + 1) / 2 * (high - low)`` with ``u ~ N(mu(s), std)``.

    With ``state_dependent_std`` the trunk outputs ``[mu, log_std]``;
    otherwise ``log_std`` is a free parameter vector (the usual PPO layout).
    """

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        hidden=(64, 64),
        act_low=None,
        act_high=None,
        activation: str = "relu",
        state_dependent_std: bool = True,
        init_log_std: float = -0.5,
        seed=None,
    ):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.low = -np.ones(act_dim) if act_low is None else np.asarray(act_low, dtype=np.float64)
        self.high = np.ones(act_dim) if act_high is None else np.asarray(act_high, dtype=np.float64)
        self.half_range = (self.high - self.low) / 2.0
        self.center = (self.high + self.low) / 2.0
        self.state_dependent_std = state_dependent_std
        out = 2 * act_dim if state_dependent_std else act_dim
        self.net = Mlp([obs_dim, *hidden, out], activation=activation, seed=seed)
        self.log_std = None if state_dependent_std else Tensor(np.full(act_dim, init_log_std), True, name="log_std")

    @property
    def params(self) -> list[Tensor]:
        return self.net.params + ([] if self.log_std is None else [self.log_std])

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    # -- distribution parameters ----------------------------------------
    def _dist(self, obs, track: bool = True):
        h = self.net.forward(obs, track_params=track)
        k = self.act_dim
        if self.state_dependent_std:
            mu, log_std = h[:, :k], h[:, k:]
        else:
            mu = h
            log_std = self.log_std if track else Tensor(self.log_std.data)
            log_std = ad.add(ad.mul(mu, 0.0), log_std)
        return mu, ad.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)

    def _dist_np(self, obs):
        h = self.net.predict(obs)
        k = self.act_dim
        if self.state_dependent_std:
            mu, log_std = h[..., :k], h[..., k:]
        else:
            mu, log_std = h, np.broadcast_to(self.log_std.data, h.shape)
        return mu, np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)

    def squash(self, u):
        if isinstance(u, Tensor):
            return ad.add(ad.mul(ad.tanh(u), self.half_range), self.center)
        return np.tanh(u) * self.half_range + self.center

    # -- sampling -------------------------------------------------------
    def rsample(self, obs, rng: np.random.Generator, track: bool = True):
        """Reparameterized sample: returns ``(action, log_prob)`` tensors of
        shapes (n, act_dim) and (n,)."""
        obs = np.atleast_2d(obs)
        mu, log_std = self._dist(obs, track)
        eps = rng.standard_normal(mu.shape)
        u = ad.add(mu, ad.mul(ad.exp(log_std), eps))
        a = self.squash(u)
        logp = (
            -0.5 * eps * eps
            - log_std
            - _HALF_LOG_2PI
            - _log1m_tanh_sq(u)
            - np.log(self.half_range)
        )
        return a, ad.tsum(logp, axis=1)

    def sample(self, obs, rng: np.random.Generator):
        """Graph-free sample for acting: ``(action, u, log_prob)``."""
        obs2 = np.atleast_2d(obs)
        mu, log_std = self._dist_np(obs2)
        eps = rng.standard_normal(mu.shape)
        u = mu + np.exp(log_std) * eps
        logp = np.sum(
            -0.5 * eps * eps - log_std - _HALF_LOG_2PI - _log1m_tanh_sq(u) - np.log(self.half_range), axis=1
        )
        a = self.squash(u)
        if np.ndim(obs) == 1:
            return a[0], u[0], float(logp[0])
        return a, u, logp

    def log_prob(self, obs, u, track: bool = True) -> Tensor:
        """Log-density of stored pre-squash samples ``u`` (shape (n, act_dim))."""
        mu, log_std = self._dist(np.atleast_2d(obs), track)
        u = np.atleast_2d(u)
        z = ad.mul(ad.sub(u, mu), ad.exp(ad.neg(log_std)))
        logp = -0.5 * ad.square(z) - log_std - _HALF_LOG_2PI - _log1m_tanh_sq(u) - np.log(self.half_range)
        return ad.tsum(logp, axis=1)

    def log_prob_np(self, obs, u) -> np.ndarray:
        mu, log_std = self._dist_np(np.atleast_2d(obs))
        u = np.atleast_2d(u)
        z = (u - mu) * np.exp(-log_std)
        return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI - _log1m_tanh_sq(u) - np.log(self.half_range), axis=1)

    def mean_action(self, obs) -> np.ndarray:
        """Deterministic action used at evaluation time."""
        mu, _ = self._dist_np(np.atleast_2d(obs))
        a = self.squash(mu)
        return a[0] if np.ndim(obs) == 1 else a

    def __call__(self, obs) -> np.ndarray:
        return self.mean_action(obs)

    # -- serialization helpers ------------------------------------------
    def state(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "act_low": self.low.tolist(),
            "act_high": self.high.tolist(),
            "state_dependent_std": self.state_dependent_std,
            "log_std": None if self.log_std is None else self.log_std.data.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict, net: Mlp) -> "SquashedGaussianPolicy":
        pol = cls(
            state["obs_dim"],
            state["act_dim"],
            hidden=tuple(net.sizes[1:-1]),
            act_low=state["act_low"],
            act_high=state["act_high"],
            activation=net.activation,
            state_dependent_std=state["state_dependent_std"],
            seed=0,
        )
        pol.net = net
        if state["log_std"] is not None:
            pol.log_std.data = np.asarray(state["log_std"], dtype=np.float64)
        return pol


class UniformPolicy:
    """Uniform random actions in the box; used for warmup and as a fixed
    evaluation policy in tests."""

    def __init__(self, act_low, act_high):
        self.low = np.asarray(act_low, dtype=np.float64)
        self.high = np.asarray(act_high, dtype=np.float64)
        self._logp = -float(np.sum(np.log(self.high - self.low)))

    def sample(self, obs, rng: np.random.Generator):
        n = 1 if np.ndim(obs) == 1 else len(obs)
        a = rng.uniform(self.low, self.high, size=(n, len(self.low)))
        logp = np.full(n, self._logp)
        if np.ndim(obs) == 1:
            return a[0], a[0], float(logp[0])
        return a, a, logp

    def mean_action(self, obs):
        mid = (self.low + self.high) / 2.0
        return mid if np.ndim(obs) == 1 else np.tile(mid, (len(obs), 1))
