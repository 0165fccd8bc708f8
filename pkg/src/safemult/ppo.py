"""PPO-clip with multiplicative advantages and a Lagrangian safety penalty.

Variants: ``base`` (no penalty), ``lagrange`` (raw rewards, standard GAE,
penalty), and ``v1``/``v2``/``v3`` (clipped rewards, multiplicative GAE,
penalty).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cmdp import DoneKind, EnvContract, Episode, RolloutBuffer, cost_to_go, make_transition, reward_to_go
from .critics import CriticEvals, LagrangeMultiplier, RunningMin, bce, dual_ascent, gae, gae_mult, q_mult, v_mult
from .numerics import Adam, Mlp
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .policies import SquashedGaussianPolicy
from .sac import METRIC_COLUMNS, ConfigError, _Window

log = logging.getLogger(__name__)

PPO_VARIANTS = ("base", "lagrange", "v1", "v2", "v3")


@dataclass
class PpoConfig:
    variant: str = "v1"
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 3e-4
    critic_lr: float = 1e-3
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatch_size: int = 256
    rollout_len: int = 2048
    n_workers: int = 1
    lambda_init: float = 0.1
    alpha_dual: float = 0.05
    c_max: float = 0.0
    n_penalty_samples: int = 4
    target_kl: float | None = 0.02
    gamma: float = 0.99
    gamma_c: float = 0.8
    init_log_std: float = -0.5
    max_grad_norm: float = 0.5
    normalize_advantage: bool = True
    timeout_is_terminal: bool = False

    def __post_init__(self):
        if self.variant not in PPO_VARIANTS:
            raise ConfigError(f"unknown PPO variant {self.variant!r}; expected one of {PPO_VARIANTS}")
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError(f"clip_eps must lie in (0, 1), got {self.clip_eps}")
        if self.n_penalty_samples < 1:
            raise ConfigError("n_penalty_samples must be >= 1")
        if self.lambda_init < 0:
            raise ConfigError(f"lambda_init must be >= 0, got {self.lambda_init}")

    @property
    def multiplicative(self) -> bool:
        return self.variant in ("v1", "v2", "v3")

    @property
    def uses_dual(self) -> bool:
        return self.variant != "base"

    @property
    def version(self) -> str | None:
        return self.variant.upper() if self.multiplicative else None


def g(eps: float, adv):
    """``(1 + eps) A`` for ``A >= 0`` and ``(1 - eps) A`` otherwise."""
    adv = np.asarray(adv, dtype=np.float64)
    return np.where(adv >= 0, (1.0 + eps) * adv, (1.0 - eps) * adv)


class PpoAgent:
    def __init__(self, obs_dim: int, act_dim: int, config: PpoConfig, act_low=None, act_high=None, seed=0):
        self.config = cfg = config
        self.rng = np.random.default_rng(seed)
        seeds = self.rng.integers(0, 2**31, size=5)
        self.policy = SquashedGaussianPolicy(
            obs_dim, act_dim, cfg.hidden, act_low, act_high, activation="tanh",
            state_dependent_std=False, init_log_std=cfg.init_log_std, seed=seeds[0],
        )
        self.v = Mlp([obs_dim, *cfg.hidden, 1], activation="tanh", seed=seeds[1])
        sa = [obs_dim + act_dim, *cfg.hidden, 1]
        self.psi = [Mlp(sa, head="sigmoid", seed=seeds[2]), Mlp(sa, head="sigmoid", seed=seeds[3])]
        # V2/V3 need an action-value head
        self.q = Mlp(sa, activation="tanh", seed=seeds[4]) if cfg.variant in ("v2", "v3") else None
        self.pi_opt = Adam(self.policy.params, lr=cfg.lr, max_grad_norm=cfg.max_grad_norm)
        self.v_opt = Adam(self.v.params, lr=cfg.critic_lr)
        self.psi_opt = [Adam(p.params, lr=cfg.critic_lr) for p in self.psi]
        self.q_opt = Adam(self.q.params, lr=cfg.critic_lr) if self.q is not None else None
        self.v_min = RunningMin()
        self.q_min = RunningMin()
        self.lam = LagrangeMultiplier(cfg.lambda_init if cfg.uses_dual else 0.0, cfg.alpha_dual, cfg.c_max)

    def nets(self) -> dict[str, Mlp]:
        out = {"policy": self.policy.net, "v": self.v, "psi1": self.psi[0], "psi2": self.psi[1]}
        if self.q is not None:
            out["q"] = self.q
        return out

    def act(self, obs, deterministic: bool = False):
        if deterministic:
            return self.policy.mean_action(obs)
        a, _, _ = self.policy.sample(obs, self.rng)
        return a

    # -- safety estimates -----------------------------------------------
    def psi_max_np(self, s, a) -> np.ndarray:
        sa = np.concatenate([s, a], axis=1)
        return np.maximum(self.psi[0].predict(sa)[:, 0], self.psi[1].predict(sa)[:, 0])

    def phi_np(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Sampled ``Phi(s) ~ mean_i max_j Psi_j(s, a_i)`` with ``a_i ~ pi``."""
        n = self.config.n_penalty_samples
        rep = np.repeat(s, n, axis=0)
        a, _, _ = self.policy.sample(rep, rng)
        return self.psi_max_np(rep, a).reshape(len(s), n).mean(axis=1)

    def penalty(self, s: np.ndarray, rng: np.random.Generator) -> Tensor:
        """Per-state ``Phi_hat(s) - c_max`` with gradients into the policy."""
        n = self.config.n_penalty_samples
        rep = np.repeat(s, n, axis=0)
        a, _ = self.policy.rsample(rep, rng)
        sa = ad.concat([rep, a], axis=1)
        psi = ad.maximum(self.psi[0].forward(sa, track_params=False), self.psi[1].forward(sa, track_params=False))
        per_state = ad.mean(ad.reshape(psi, (len(s), n)), axis=1)
        return per_state - self.config.c_max


@dataclass
class RolloutData:
    """Flattened rollout with everything the optimizer phase needs."""

    s: np.ndarray
    a: np.ndarray
    u: np.ndarray
    logp: np.ndarray
    adv: np.ndarray
    returns: np.ndarray
    cost_returns: np.ndarray
    q_targets: np.ndarray
    raw_adv: np.ndarray

    def __len__(self) -> int:
        return len(self.s)


def prepare(agent: PpoAgent, episodes: Sequence[Episode], rng: np.random.Generator) -> RolloutData:
    """Critic evaluations, advantages, rewards-to-go and cost-to-go."""
    cfg = agent.config
    if not episodes or sum(len(e) for e in episodes) == 0:
        raise ValueError("empty rollout")
    cat = lambda name: np.concatenate([getattr(e, name) for e in episodes])  # noqa: E731
    S, S2 = cat("s"), cat("s_next")
    V, V2 = agent.v.predict(S)[:, 0], agent.v.predict(S2)[:, 0]
    Phi = agent.phi_np(S, rng) if cfg.multiplicative else None
    # Phi(s') also bootstraps the cost-to-go of cut episodes
    Phi2 = agent.phi_np(S2, rng)
    A_all = cat("a")
    Q = agent.q.predict(np.concatenate([S, A_all], axis=1))[:, 0] if agent.q is not None else None
    if cfg.multiplicative:
        agent.v_min.update(V)
        agent.v_min.update(V2)
        if Q is not None:
            agent.q_min.update(Q)
        VM = v_mult(V, agent.v_min.value, Phi)
        VM2 = v_mult(V2, agent.v_min.value, Phi2)
        PsiSA = agent.psi_max_np(S, A_all) if cfg.variant == "v2" else None

    advs, rets, crets, qtg = [], [], [], []
    i = 0
    for ep in episodes:
        j = i + len(ep)
        sl = slice(i, j)
        boot = ep.bootstraps
        if cfg.multiplicative:
            evals = CriticEvals(
                v_mult_s=VM[sl],
                v_mult_next=VM2[sl],
                q_mult=q_mult(Q[sl], agent.q_min.value, PsiSA[sl]) if cfg.variant == "v2" else None,
                q_bar=Q[sl] if Q is not None else None,
                q_min=agent.q_min.value,
                phi_next=Phi2[sl],
            )
            adv = gae_mult(ep.r, ep.d, ep.r_c, evals, cfg.gamma, cfg.gae_lambda, cfg.version, cfg.gamma_c)
        else:
            delta = ep.r + cfg.gamma * (1.0 - ep.d) * V2[sl] - V[sl]
            adv = gae(delta, ep.d, cfg.gamma, cfg.gae_lambda)
        advs.append(adv)
        rets.append(reward_to_go(ep.r, cfg.gamma, V2[j - 1] if boot else 0.0))
        crets.append(cost_to_go(ep.r_c, cfg.gamma_c, Phi2[j - 1] if boot else 0.0))
        qtg.append(ep.r + cfg.gamma * (1.0 - ep.d) * V2[sl])
        i = j
    adv = np.concatenate(advs)
    raw_adv = adv.copy()
    if cfg.normalize_advantage and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return RolloutData(S, A_all, cat("u"), cat("logp"), adv, np.concatenate(rets), np.concatenate(crets),
                       np.concatenate(qtg), raw_adv)


def surrogate_loss(agent: PpoAgent, s, u, logp_old, adv, lam: float, rng: np.random.Generator):
    """``-mean(min(ratio A, g(eps, A))) + lam * mean(Phi_hat)``.

    Returns the loss tensor and a dict with the ratio and approximate KL.
    """
    cfg = agent.config
    logp = agent.policy.log_prob(s, u)
    log_ratio = logp - logp_old
    if not np.all(np.isfinite(log_ratio.data)):
        bad = np.flatnonzero(~np.isfinite(log_ratio.data))[0]
        raise FloatingPointError(f"non-finite ratio: new log-prob {logp.data[bad]}, old {logp_old[bad]}")
    ratio = ad.exp(log_ratio)
    surr = ad.minimum(ratio * adv, Tensor(g(cfg.clip_eps, adv)))
    loss = -ad.mean(surr)
    pen = None
    if lam > 0.0:
        pen = agent.penalty(s, rng)
        loss = loss + lam * ad.mean(pen)
    approx_kl = float(np.mean((ratio.data - 1.0) - log_ratio.data))
    return loss, {"ratio": ratio.data, "approx_kl": approx_kl, "penalty": None if pen is None else pen.data}


def update(agent: PpoAgent, rollout: RolloutBuffer | Sequence[Episode], rng: np.random.Generator | None = None) -> dict:
    """Optimizer phase for one rollout; returns mean losses."""
    cfg = agent.config
    rng = agent.rng if rng is None else rng
    episodes = rollout.episodes() if isinstance(rollout, RolloutBuffer) else list(rollout)
    data = prepare(agent, episodes, rng)
    n = len(data)
    mb = min(cfg.minibatch_size, n)
    losses = {"actor": [], "value": [], "safety": []}
    policy_active = True
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, mb):
            idx = order[lo : lo + mb]
            s = data.s[idx]
            if policy_active:
                loss, info = surrogate_loss(agent, s, data.u[idx], data.logp[idx], data.adv[idx], agent.lam.value, rng)
                if cfg.target_kl is not None and info["approx_kl"] > 1.5 * cfg.target_kl:
                    policy_active = False
                else:
                    agent.pi_opt.zero_grad()
                    ad.backward(loss)
                    agent.pi_opt.step()
                    losses["actor"].append(loss.item())
            vloss = ad.mean(ad.square(agent.v.forward(s)[:, 0] - data.returns[idx]))
            _step(agent.v_opt, vloss, "value")
            losses["value"].append(vloss.item())
            sa = np.concatenate([s, data.a[idx]], axis=1)
            sl = []
            for psi, opt in zip(agent.psi, agent.psi_opt):
                l = bce(psi.forward(sa)[:, 0], data.cost_returns[idx])
                _step(opt, l, "safety")
                sl.append(l.item())
            losses["safety"].append(float(np.mean(sl)))
            if agent.q is not None:
                _step(agent.q_opt, ad.mean(ad.square(agent.q.forward(sa)[:, 0] - data.q_targets[idx])), "action-value")
    if cfg.uses_dual:
        level = float(np.mean(agent.phi_np(data.s, rng))) - cfg.c_max
        dual_ascent(agent.lam, level)
        assert agent.lam.value >= 0.0
    mean = lambda xs: float(np.mean(xs)) if xs else float("nan")  # noqa: E731
    return {k: mean(v) for k, v in losses.items()} | {"lambda": agent.lam.value}


def _step(opt: Adam, loss, what: str) -> None:
    if not math.isfinite(loss.item()):
        raise FloatingPointError(f"non-finite {what} loss")
    opt.zero_grad()
    ad.backward(loss)
    opt.step()


def collect(agent: PpoAgent, envs: Sequence[EnvContract], states: list, ep_returns: list,
            steps: int, window: _Window) -> RolloutBuffer:
    """Step every worker ``steps`` times with the current stochastic policy."""
    cfg = agent.config
    buf = RolloutBuffer(len(envs))
    for w, env in enumerate(envs):
        s = states[w]
        for _ in range(steps):
            a, u, logp = agent.policy.sample(s, agent.rng)
            s_next, raw, kind = env.step(a)
            tr = make_transition(env, s, a, s_next, raw, kind, clip=cfg.multiplicative,
                                 timeout_is_terminal=cfg.timeout_is_terminal)
            buf.add(w, tr, u, logp)
            ep_returns[w] += raw
            if kind is DoneKind.NONE:
                s = s_next
            else:
                window.returns.append(ep_returns[w])
                window.kinds.append(kind)
                ep_returns[w] = 0.0
                s = env.reset()
        states[w] = s
    return buf


def train(
    config: PpoConfig,
    env_factory: Callable[[int], EnvContract],
    budget: int,
    seed: int = 0,
    on_row: Callable[[dict], None] | None = None,
    checkpoints: tuple[int, ...] = (),
    on_checkpoint: Callable[[int, PpoAgent], None] | None = None,
) -> tuple[PpoAgent, list[dict]]:
    """Alternate rollouts over ``n_workers`` seeded workers with updates.

    One metrics row per update. A checkpoint step fires ``on_checkpoint``
    after the first update reaching it.
    """
    envs = [env_factory(w) for w in range(config.n_workers)]
    agent = PpoAgent(envs[0].obs_dim, envs[0].act_dim, config, envs[0].act_low, envs[0].act_high, seed=seed)
    rows: list[dict] = []
    per_update = config.rollout_len * config.n_workers
    states = [env.reset(np.random.default_rng([seed, 3, w])) for w, env in enumerate(envs)]
    ep_returns = [0.0] * len(envs)
    pending = sorted(checkpoints)
    step = 0
    while step + per_update <= budget:
        window = _Window()
        buf = collect(agent, envs, states, ep_returns, config.rollout_len, window)
        step += per_update
        out = update(agent, buf)
        for k in ("value", "safety", "actor"):
            window.losses[k].append(out[k])
        row = window.row(step, agent.lam.value, agent.v_min.value, agent.q_min.value)
        rows.append(row)
        if on_row is not None:
            on_row(row)
        while pending and pending[0] <= step:
            pending.pop(0)
            if on_checkpoint is not None:
                on_checkpoint(step, agent)
    return agent, rows


__all__ = ["METRIC_COLUMNS", "PpoAgent", "PpoConfig", "g", "prepare", "surrogate_loss", "train", "update"]
