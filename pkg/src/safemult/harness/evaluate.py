"""Deterministic evaluation protocol."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..cmdp import DoneKind, EnvContract


@dataclass
class SeedEval:
    seed: int
    episodes: int
    reward_mean: float
    violation_pct: float
    success_pct: float
    timeout_pct: float


@dataclass
class EvalReport:
    per_seed: list[SeedEval] = field(default_factory=list)

    @property
    def episodes(self) -> int:
        return sum(s.episodes for s in self.per_seed)

    def _stat(self, name: str) -> tuple[float, float]:
        vals = [getattr(s, name) for s in self.per_seed if s.episodes > 0]
        if not vals:
            return 0.0, 0.0
        return float(np.mean(vals)), float(np.std(vals))

    @property
    def reward(self) -> tuple[float, float]:
        return self._stat("reward_mean")

    @property
    def violation_pct(self) -> tuple[float, float]:
        return self._stat("violation_pct")

    @property
    def success_pct(self) -> tuple[float, float]:
        return self._stat("success_pct")

    @property
    def timeout_pct(self) -> tuple[float, float]:
        return self._stat("timeout_pct")

    def summary(self) -> str:
        fmt = lambda p: f"{p[0]:.2f} +- {p[1]:.2f}"  # noqa: E731
        return (
            f"reward {fmt(self.reward)}, violations% {fmt(self.violation_pct)}, "
            f"success% {fmt(self.success_pct)}, timeout% {fmt(self.timeout_pct)} "
            f"over {len(self.per_seed)} seeds / {self.episodes} episodes"
        )


def run_episode(policy: Callable[[np.ndarray], np.ndarray], env: EnvContract, rng=None) -> tuple[float, DoneKind]:
    """One episode with ``policy``; returns the undiscounted raw return and how it ended."""
    s = env.reset(rng)
    total = 0.0
    while True:
        s, r, kind = env.step(policy(s))
        total += r
        if kind is not DoneKind.NONE:
            return total, kind


def evaluate(
    policy: Callable[[np.ndarray], np.ndarray],
    env_factory: Callable[[int], EnvContract],
    n_episodes: int,
    seeds: Sequence[int],
) -> EvalReport:
    """Run ``n_episodes`` per seed, each seed on a fresh env RNG.

    ``policy`` should be deterministic (the mean action).
    """
    report = EvalReport()
    for seed in seeds:
        env = env_factory(seed)
        rng = np.random.default_rng([seed, 7])
        returns, kinds = [], []
        for i in range(n_episodes):
            ret, kind = run_episode(policy, env, rng if i == 0 else None)
            returns.append(ret)
            kinds.append(kind)
        n = len(kinds)
        pct = lambda k: 100.0 * sum(x is k for x in kinds) / n if n else 0.0  # noqa: E731
        report.per_seed.append(
            SeedEval(
                seed=int(seed),
                episodes=n,
                reward_mean=float(np.mean(returns)) if n else 0.0,
                violation_pct=pct(DoneKind.CONSTRAINT),
                success_pct=pct(DoneKind.GOAL),
                timeout_pct=pct(DoneKind.TIMEOUT),
            )
        )
    return report
