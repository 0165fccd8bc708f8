"""A finite chain with a safe terminal on the left and the constraint set on
the right; small enough that reachability can be solved exactly."""
from __future__ import annotations

import numpy as np

from ..cmdp import DoneKind, EnvContract, TerminalStepError


class ChainMdp(EnvContract):
    """States ``0..n-1``. State 0 is a safe terminal (goal), ``n-1`` is the
    constraint set. The scalar action ``a`` in [-1, 1] moves right with
    probability ``(1 + a) / 2`` and left otherwise.

    Observations are one-hot state vectors.
    """

    act_dim = 1

    def __init__(
        self,
        n: int = 7,
        horizon: int = 100,
        start: int | str = "random",
        step_reward: float = -0.01,
        goal_reward: float = 1.0,
        constraint_reward: float = -1.0,
        gamma: float = 0.99,
        gamma_c: float = 1.0,
        seed=None,
    ):
        if n < 3:
            raise ValueError(f"chain needs at least 3 states, got {n}")
        self.n = n
        self.obs_dim = n
        self.act_low = -np.ones(1)
        self.act_high = np.ones(1)
        self.horizon = horizon
        self.start = start
        self.step_reward = step_reward
        self.goal_reward = goal_reward
        self.constraint_reward = constraint_reward
        self.reward_floor = min(step_reward, goal_reward)
        self.gamma, self.gamma_c = gamma, gamma_c
        self.rng = np.random.default_rng(seed)
        self.state = None
        self.t = 0
        self.done = True

    @property
    def constraint_state(self) -> int:
        return self.n - 1

    @property
    def interior(self) -> np.ndarray:
        return np.arange(1, self.n - 1)

    def obs(self, state: int | None = None) -> np.ndarray:
        o = np.zeros(self.n)
        o[self.state if state is None else state] = 1.0
        return o

    @staticmethod
    def right_prob(action) -> np.ndarray:
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        return (1.0 + a) / 2.0

    def reset(self, rng: np.random.Generator | None = None, state: int | None = None) -> np.ndarray:
        if rng is not None:
            self.rng = rng
        if state is not None:
            self.state = int(state)
        elif self.start == "random":
            self.state = int(self.rng.integers(1, self.n - 1))
        else:
            self.state = int(self.start)
        self.t = 0
        self.done = False
        return self.obs()

    def step(self, action):
        if self.done:
            raise TerminalStepError("episode has ended; call reset()")
        p = float(self.right_prob(np.ravel(action)[0]))
        self.state += 1 if self.rng.random() < p else -1
        self.t += 1
        if self.state == self.constraint_state:
            kind, r = DoneKind.CONSTRAINT, self.constraint_reward
        elif self.state == 0:
            kind, r = DoneKind.GOAL, self.goal_reward
        elif self.t >= self.horizon:
            kind, r = DoneKind.TIMEOUT, self.step_reward
        else:
            kind, r = DoneKind.NONE, self.step_reward
        self.done = kind is not DoneKind.NONE
        return self.obs(), r, kind


def transition_matrix(chain: ChainMdp, policy) -> np.ndarray:
    """State-to-state matrix under ``policy``.

    ``policy`` is an (n, n) matrix, a length-n vector of right-move
    probabilities, or a callable mapping a state index to that probability.
    Terminal rows are absorbing.
    """
    n = chain.n
    if callable(policy):
        policy = np.array([policy(s) for s in range(n)], dtype=np.float64)
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape == (n, n):
        P = policy.copy()
    elif policy.shape == (n,):
        P = np.zeros((n, n))
        for s in chain.interior:
            P[s, s + 1] = policy[s]
            P[s, s - 1] = 1.0 - policy[s]
        P[0, 0] = P[n - 1, n - 1] = 1.0
    else:
        raise ValueError(f"policy must be shape ({n},) or ({n}, {n}), got {policy.shape}")
    if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("transition rows must be nonnegative and sum to 1")
    return P


def chain_reachability(
    chain: ChainMdp, policy, gamma_c: float, tol: float = 1e-12, max_iter: int = 1_000_000
) -> np.ndarray:
    """Discounted probability of entering the constraint state.

    Fixed point of ``Phi(s) = E[r_c + gamma_c (1 - d) Phi(s')]`` on interior
    states, with ``Phi = 1`` on the constraint state and 0 on the safe
    terminal. At ``gamma_c = 1`` this is the hitting probability.
    """
    P = transition_matrix(chain, policy)
    n, c = chain.n, chain.constraint_state
    interior = chain.interior
    cost = P[:, c]
    cont = P.copy()
    cont[:, [0, c]] = 0.0
    phi = np.zeros(n)
    phi[c] = 1.0
    for _ in range(max_iter):
        new = phi.copy()
        new[interior] = cost[interior] + gamma_c * (cont[interior] @ phi)
        if np.max(np.abs(new - phi)) < tol:
            return new
        phi = new
    raise RuntimeError("reachability iteration did not converge (improper policy with gamma_c = 1?)")


def bellman_residual(chain: ChainMdp, policy, phi: np.ndarray, gamma_c: float) -> float:
    """Max residual of the reachability Bellman equation on interior states."""
    P = transition_matrix(chain, policy)
    c = chain.constraint_state
    cont = P.copy()
    cont[:, [0, c]] = 0.0
    rhs = P[:, c] + gamma_c * cont @ phi
    idx = chain.interior
    return float(np.max(np.abs(phi[idx] - rhs[idx])))
