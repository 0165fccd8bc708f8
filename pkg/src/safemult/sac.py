"""Soft actor-critic with a multiplicative safety/reward value function.

Variants:

* ``base`` - plain SAC on raw rewards; the safety critics are trained for
  logging only and never touch the actor.
* ``lagrange`` - plain SAC on raw rewards with a Lagrangian penalty on the
  safety critic.
* ``mult`` - actor ascends ``Q_mult`` on clipped rewards.
* ``mult_clipped`` - as ``mult`` with the safety-gradient weight capped at
  ``lambda_max``.
* ``mult_lagrange`` - safety-gradient weight replaced by a dual variable.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cmdp import Batch, DoneKind, EnvContract, ReplayBuffer, make_transition
from .critics import LagrangeMultiplier, RunningMin, bce, dual_ascent, polyak, q_mult, safety_target
from .numerics import Adam, Mlp
from .numerics import autodiff as ad
from .policies import SquashedGaussianPolicy

log = logging.getLogger(__name__)

SAC_VARIANTS = ("base", "lagrange", "mult", "mult_clipped", "mult_lagrange")


class ConfigError(ValueError):
    pass


@dataclass
class SacConfig:
    variant: str = "mult_lagrange"
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 1e-3
    alpha_ent: float = 0.01
    lambda_max: float | None = 5.0
    lambda_init: float = 5.0
    alpha_dual: float = 0.01
    c_max: float = 0.0
    gamma: float = 0.99
    gamma_c: float = 0.8
    rho: float = 0.995
    rho_c: float = 0.995
    batch_size: int = 128
    warmup: int = 1000
    train_freq: int = 1
    gradient_steps: int = 1
    buffer_size: int = 100_000
    timeout_is_terminal: bool = False

    def __post_init__(self):
        if self.variant not in SAC_VARIANTS:
            raise ConfigError(f"unknown SAC variant {self.variant!r}; expected one of {SAC_VARIANTS}")
        if self.variant == "mult_clipped" and not (self.lambda_max and self.lambda_max > 0):
            raise ConfigError("mult_clipped needs lambda_max > 0")
        if self.lambda_init < 0:
            raise ConfigError(f"lambda_init must be >= 0, got {self.lambda_init}")

    @property
    def multiplicative(self) -> bool:
        return self.variant.startswith("mult")

    @property
    def uses_dual(self) -> bool:
        return self.variant in ("lagrange", "mult_lagrange")


def _sa(s, a):
    return np.concatenate([s, a], axis=-1)


class SacAgent:
    """Owns the policy, four online critics with targets, running minima and
    the dual variable."""

    def __init__(self, obs_dim: int, act_dim: int, config: SacConfig, act_low=None, act_high=None, seed=0):
        self.config = cfg = config
        self.rng = np.random.default_rng(seed)
        seeds = self.rng.integers(0, 2**31, size=5)
        self.policy = SquashedGaussianPolicy(
            obs_dim, act_dim, cfg.hidden, act_low, act_high, state_dependent_std=True, seed=seeds[0]
        )
        sizes = [obs_dim + act_dim, *cfg.hidden, 1]
        self.q = [Mlp(sizes, seed=seeds[1]), Mlp(sizes, seed=seeds[2])]
        self.psi = [Mlp(sizes, head="sigmoid", seed=seeds[3]), Mlp(sizes, head="sigmoid", seed=seeds[4])]
        self.q_targ = [q.copy() for q in self.q]
        self.psi_targ = [p.copy() for p in self.psi]
        self.pi_opt = Adam(self.policy.params, lr=cfg.lr)
        self.q_opt = [Adam(q.params, lr=cfg.lr) for q in self.q]
        self.psi_opt = [Adam(p.params, lr=cfg.lr) for p in self.psi]
        self.q_min = RunningMin()
        self.v_min = RunningMin()
        self.lam = LagrangeMultiplier(cfg.lambda_init if cfg.uses_dual else 0.0, cfg.alpha_dual, cfg.c_max)

    # -- nets by name, for checkpoints ----------------------------------
    def nets(self) -> dict[str, Mlp]:
        return {
            "policy": self.policy.net,
            "q1": self.q[0], "q2": self.q[1], "q1_targ": self.q_targ[0], "q2_targ": self.q_targ[1],
            "psi1": self.psi[0], "psi2": self.psi[1], "psi1_targ": self.psi_targ[0], "psi2_targ": self.psi_targ[1],
        }

    def act(self, obs, deterministic: bool = False) -> np.ndarray:
        if deterministic:
            return self.policy.mean_action(obs)
        a, _, _ = self.policy.sample(obs, self.rng)
        return a

    # -- updates --------------------------------------------------------
    def critic_update(self, batch: Batch) -> tuple[float, float]:
        """One gradient step on both reward critics (MSE) and both safety
        critics (BCE). Returns ``(reward loss, safety loss)`` twin means."""
        cfg = self.config
        a_next, _, logp_next = self.policy.sample(batch.s_next, self.rng)
        sa_next = _sa(batch.s_next, a_next)
        q_next = np.minimum(self.q_targ[0].predict(sa_next)[:, 0], self.q_targ[1].predict(sa_next)[:, 0])
        y = batch.r + cfg.gamma * (1.0 - batch.d) * (q_next - cfg.alpha_ent * logp_next)
        psi_next = [p.predict(sa_next)[:, 0] for p in self.psi_targ]
        y_c = safety_target(batch.r_c, batch.d, cfg.gamma_c, psi_next)

        sa = _sa(batch.s, batch.a)
        q_losses, preds = [], []
        for q, opt in zip(self.q, self.q_opt):
            pred = q(sa)[:, 0]
            loss = ad.mean(ad.square(pred - y))
            self._check_finite(loss, "reward critic", batch)
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            q_losses.append(loss.item())
            preds.append(pred.data)
        self.q_min.update(np.minimum(*preds))

        psi_losses = []
        for p, opt in zip(self.psi, self.psi_opt):
            loss = bce(p(sa)[:, 0], y_c)
            self._check_finite(loss, "safety critic", batch)
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            psi_losses.append(loss.item())
        return float(np.mean(q_losses)), float(np.mean(psi_losses))

    def actor_objective(self, s: np.ndarray, rng: np.random.Generator | None = None):
        """Per-sample actor objective (to be maximized) and its pieces."""
        cfg = self.config
        a, logp = self.policy.rsample(s, self.rng if rng is None else rng)
        sa = ad.concat([s, a], axis=1)
        q = ad.minimum(self.q[0].forward(sa, track_params=False), self.q[1].forward(sa, track_params=False))[:, 0]
        psi = ad.maximum(self.psi[0].forward(sa, track_params=False), self.psi[1].forward(sa, track_params=False))[:, 0]
        entropy = cfg.alpha_ent * logp
        v = cfg.variant
        if v == "base":
            obj = q - entropy
        elif v == "lagrange":
            obj = q - entropy - self.lam.value * (psi - cfg.c_max)
        else:
            floor = self.q_min.update(q.data)
            if v == "mult":
                obj = q_mult(q, floor, psi) - entropy
            elif v == "mult_clipped":
                weight = np.minimum(q.data - floor, cfg.lambda_max)
                obj = ad.stop_gradient(1.0 - psi) * q - weight * psi - entropy
            else:
                obj = ad.stop_gradient(1.0 - psi) * q - entropy - self.lam.value * (psi - cfg.c_max)
        return obj, {"q": q, "psi": psi, "logp": logp, "action": a}

    def actor_update(self, batch: Batch) -> float:
        obj, parts = self.actor_objective(batch.s)
        loss = -ad.mean(obj)
        self._check_finite(loss, "actor", batch)
        self.pi_opt.zero_grad()
        ad.backward(loss)
        self.pi_opt.step()
        if self.config.uses_dual:
            dual_ascent(self.lam, float(np.mean(parts["psi"].data)) - self.config.c_max)
            assert self.lam.value >= 0.0
        return loss.item()

    def target_update(self) -> None:
        for t, o in zip(self.q_targ, self.q):
            polyak(t, o, self.config.rho)
        for t, o in zip(self.psi_targ, self.psi):
            polyak(t, o, self.config.rho_c)

    @staticmethod
    def _check_finite(loss, what: str, batch: Batch) -> None:
        if not math.isfinite(loss.item()):
            raise FloatingPointError(
                f"non-finite {what} loss; batch r range [{batch.r.min()}, {batch.r.max()}], "
                f"r_c sum {batch.r_c.sum()}, d sum {batch.d.sum()}, obs finite={np.isfinite(batch.s).all()}"
            )


METRIC_COLUMNS = (
    "step", "episode_reward_mean", "violation_rate", "success_rate", "timeout_rate",
    "value_loss", "safety_loss", "actor_loss", "lambda", "v_min", "q_min",
)


@dataclass
class _Window:
    """Episode outcomes and losses accumulated between two metrics rows."""

    returns: list[float] = field(default_factory=list)
    kinds: list[DoneKind] = field(default_factory=list)
    losses: dict[str, list[float]] = field(default_factory=lambda: {"value": [], "safety": [], "actor": []})

    def row(self, step: int, lam: float, v_min: float, q_min: float) -> dict:
        n = len(self.kinds)
        rate = lambda k: (sum(x is k for x in self.kinds) / n) if n else float("nan")  # noqa: E731
        mean = lambda xs: float(np.mean(xs)) if xs else float("nan")  # noqa: E731
        return {
            "step": step,
            "episode_reward_mean": mean(self.returns),
            "violation_rate": rate(DoneKind.CONSTRAINT),
            "success_rate": rate(DoneKind.GOAL),
            "timeout_rate": rate(DoneKind.TIMEOUT),
            "value_loss": mean(self.losses["value"]),
            "safety_loss": mean(self.losses["safety"]),
            "actor_loss": mean(self.losses["actor"]),
            "lambda": lam,
            "v_min": v_min,
            "q_min": q_min,
        }


def train(
    config: SacConfig,
    env: EnvContract,
    budget: int,
    seed: int = 0,
    log_every: int = 1000,
    on_row: Callable[[dict], None] | None = None,
    checkpoints: tuple[int, ...] = (),
    on_checkpoint: Callable[[int, SacAgent], None] | None = None,
) -> tuple[SacAgent, list[dict]]:
    """Run SAC for ``budget`` environment steps.

    Metrics rows are emitted every ``log_every`` steps; ``on_checkpoint`` is
    called after the steps listed in ``checkpoints``.
    """
    agent = SacAgent(env.obs_dim, env.act_dim, config, env.act_low, env.act_high, seed=seed)
    rows: list[dict] = []
    if budget <= 0:
        return agent, rows
    rng = np.random.default_rng([seed, 1])
    buffer = ReplayBuffer(env.obs_dim, env.act_dim, config.buffer_size, seed=[seed, 2])
    env_rng = np.random.default_rng([seed, 3])
    checkpoints = set(checkpoints)
    window = _Window()
    s = env.reset(env_rng)
    ep_return = 0.0
    for step in range(1, budget + 1):
        if step <= config.warmup:
            a = rng.uniform(env.act_low, env.act_high)
        else:
            a = agent.act(s)
        s_next, raw, kind = env.step(a)
        tr = make_transition(env, s, a, s_next, raw, kind, clip=config.multiplicative,
                             timeout_is_terminal=config.timeout_is_terminal)
        buffer.add(tr)
        ep_return += raw
        if kind is DoneKind.NONE:
            s = s_next
        else:
            window.returns.append(ep_return)
            window.kinds.append(kind)
            ep_return = 0.0
            s = env.reset()
        if step > config.warmup and step % config.train_freq == 0 and len(buffer) >= config.batch_size:
            for _ in range(config.gradient_steps):
                batch = buffer.sample(config.batch_size)
                vl, sl = agent.critic_update(batch)
                al = agent.actor_update(batch)
                agent.target_update()
                window.losses["value"].append(vl)
                window.losses["safety"].append(sl)
                window.losses["actor"].append(al)
        if step % log_every == 0 or step == budget:
            row = window.row(step, agent.lam.value, agent.v_min.value, agent.q_min.value)
            rows.append(row)
            if on_row is not None:
                on_row(row)
            window = _Window()
        if step in checkpoints and on_checkpoint is not None:
            on_checkpoint(step, agent)
    return agent, rows
