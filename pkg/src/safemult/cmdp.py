"""CMDP environment contract, reward clipping and experience storage."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DoneKind(str, enum.Enum):
    NONE = "none"
    GOAL = "goal"
    CONSTRAINT = "constraint"
    TIMEOUT = "timeout"


class TerminalStepError(RuntimeError):
    """Raised when ``step`` is called on an episode that already ended."""


class EnvContract:
    """Interface shared by every bundled environment.

    Subclasses set the class attributes and implement :meth:`reset` and
    :meth:`step`. ``step`` returns ``(next_obs, raw_reward, done_kind)``;
    entering the constraint set is always terminal.
    """

    obs_dim: int
    act_dim: int
    act_low: np.ndarray
    act_high: np.ndarray
    #: minimum constraint-free reward, used as the clipped reward on violations
    reward_floor: float
    gamma: float = 0.99
    gamma_c: float = 0.8
    horizon: int = 200

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, DoneKind]:
        raise NotImplementedError


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r_bar: float
    r_c: float
    s_next: np.ndarray
    d: float
    done_kind: DoneKind
    raw_reward: float = 0.0

    def __post_init__(self):
        if (self.r_c == 1.0) != (self.done_kind is DoneKind.CONSTRAINT):
            raise ValueError(f"r_c={self.r_c} inconsistent with done_kind={self.done_kind.value}")


def clip_reward(raw_reward: float, done_kind: DoneKind, env_or_floor) -> float:
    """Replace the constraint reward by the constraint-free minimum."""
    floor = env_or_floor if isinstance(env_or_floor, (float, int)) else env_or_floor.reward_floor
    if done_kind is DoneKind.CONSTRAINT:
        return float(floor)
    if raw_reward < floor - 1e-12:
        raise ValueError(
            f"constraint-free reward {raw_reward} is below the declared floor {floor}"
        )
    return float(raw_reward)


def make_transition(
    env: EnvContract,
    s: np.ndarray,
    a: np.ndarray,
    s_next: np.ndarray,
    raw_reward: float,
    done_kind: DoneKind,
    clip: bool = True,
    timeout_is_terminal: bool = False,
) -> Transition:
    """Package one environment step.

    ``clip=False`` stores the raw reward in ``r_bar`` (baseline agents).
    Timeouts keep ``d=0`` unless ``timeout_is_terminal``.
    """
    r = clip_reward(raw_reward, done_kind, env) if clip else float(raw_reward)
    if done_kind in (DoneKind.GOAL, DoneKind.CONSTRAINT):
        d = 1.0
    elif done_kind is DoneKind.TIMEOUT:
        d = 1.0 if timeout_is_terminal else 0.0
    else:
        d = 0.0
    r_c = 1.0 if done_kind is DoneKind.CONSTRAINT else 0.0
    return Transition(s, a, r, r_c, s_next, d, done_kind, float(raw_reward))


def reward_to_go(rewards: Sequence[float], gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """Discounted sum of rewards from each step to the episode end.

    ``bootstrap`` is the value of the state after the last step (nonzero only
    for timeouts and rollout cuts).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def cost_to_go(costs: Sequence[float], gamma_c: float, bootstrap: float = 0.0) -> np.ndarray:
    """Discounted constraint cost from each step on, in [0, 1].

    With the violation on step ``k`` this is ``gamma_c ** (k - t)``.
    """
    out = reward_to_go(costs, gamma_c, bootstrap)
    return np.clip(out, 0.0, 1.0)


# -- replay buffer ------------------------------------------------------
@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    r_c: np.ndarray
    s_next: np.ndarray
    d: np.ndarray

    def __len__(self) -> int:
        return len(self.r)


class ReplayBuffer:
    """Ring buffer of transitions with uniform sampling."""

    def __init__(self, obs_dim: int, act_dim: int, capacity: int = 100_000, seed=None):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, obs_dim))
        self.a = np.zeros((self.capacity, act_dim))
        self.r = np.zeros(self.capacity)
        self.r_c = np.zeros(self.capacity)
        self.s_next = np.zeros((self.capacity, obs_dim))
        self.d = np.zeros(self.capacity)
        self.cursor = 0
        self.size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def add(self, tr: Transition) -> None:
        i = self.cursor
        self.s[i] = tr.s
        self.a[i] = tr.a
        self.r[i] = tr.r_bar
        self.r_c[i] = tr.r_c
        self.s_next[i] = tr.s_next
        self.d[i] = tr.d
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        return self.rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int) -> Batch:
        idx = self.sample_indices(batch_size)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.r_c[idx], self.s_next[idx], self.d[idx])


# -- rollout buffer -----------------------------------------------------
@dataclass
class Episode:
    """Consecutive steps of one worker. ``cut`` marks a rollout boundary."""

    s: np.ndarray
    a: np.ndarray
    u: np.ndarray
    logp: np.ndarray
    r: np.ndarray
    raw_r: np.ndarray
    r_c: np.ndarray
    s_next: np.ndarray
    d: np.ndarray
    kinds: list[DoneKind]
    cut: bool = False

    def __len__(self) -> int:
        return len(self.r)

    @property
    def final_kind(self) -> DoneKind:
        return self.kinds[-1]

    @property
    def bootstraps(self) -> bool:
        """Whether the value after the last step must be bootstrapped."""
        return self.cut or self.d[-1] == 0.0


@dataclass
class _Open:
    rows: dict[str, list] = field(default_factory=lambda: {k: [] for k in _FIELDS})
    kinds: list[DoneKind] = field(default_factory=list)


_FIELDS = ("s", "a", "u", "logp", "r", "raw_r", "r_c", "s_next", "d")


class RolloutBuffer:
    """On-policy storage keeping episode boundaries per worker."""

    def __init__(self, n_workers: int = 1):
        self.n_workers = n_workers
        self.clear()

    def clear(self) -> None:
        self._open = [_Open() for _ in range(self.n_workers)]
        self._done: list[list[Episode]] = [[] for _ in range(self.n_workers)]
        self.n_steps = 0

    def add(self, worker: int, tr: Transition, u: np.ndarray, logp: float) -> None:
        cur = self._open[worker]
        for key, val in (
            ("s", tr.s), ("a", tr.a), ("u", u), ("logp", logp), ("r", tr.r_bar),
            ("raw_r", tr.raw_reward), ("r_c", tr.r_c), ("s_next", tr.s_next), ("d", tr.d),
        ):
            cur.rows[key].append(val)
        cur.kinds.append(tr.done_kind)
        self.n_steps += 1
        if tr.done_kind is not DoneKind.NONE:
            self._done[worker].append(self._close(cur, cut=False))
            self._open[worker] = _Open()

    @staticmethod
    def _close(cur: _Open, cut: bool) -> Episode:
        arr = {k: np.asarray(v, dtype=np.float64) for k, v in cur.rows.items()}
        return Episode(kinds=list(cur.kinds), cut=cut, **arr)

    def episodes(self) -> list[Episode]:
        """Finished episodes followed by the partial tail of each worker."""
        out = []
        for w in range(self.n_workers):
            out.extend(self._done[w])
            if self._open[w].kinds:
                out.append(self._close(self._open[w], cut=True))
        return out

    def __iter__(self) -> Iterator[Episode]:
        return iter(self.episodes())


# -- transition log -----------------------------------------------------
TRANSITION_LOG_HEADER = "# s;a;r_bar;r_c;s_next;d;done_kind"


class TransitionLog:
    """Append-only text log, one transition per line.

    Fields are separated by ``;`` in Transition order; vector entries are
    space separated.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.write_text(TRANSITION_LOG_HEADER + "\n")

    @staticmethod
    def format(tr: Transition) -> str:
        vec = lambda x: " ".join(repr(float(v)) for v in np.ravel(x))  # noqa: E731
        return ";".join(
            [vec(tr.s), vec(tr.a), repr(tr.r_bar), repr(tr.r_c), vec(tr.s_next), repr(tr.d), tr.done_kind.value]
        )

    @staticmethod
    def parse(line: str) -> Transition:
        s, a, r, rc, sn, d, kind = line.rstrip("\n").split(";")
        vec = lambda x: np.array([float(v) for v in x.split()])  # noqa: E731
        return Transition(vec(s), vec(a), float(r), float(rc), vec(sn), float(d), DoneKind(kind))

    def append(self, tr: Transition) -> None:
        with self.path.open("a") as fh:
            fh.write(self.format(tr) + "\n")

    def read(self) -> list[Transition]:
        lines = self.path.read_text().splitlines()
        return [self.parse(line) for line in lines if line and not line.startswith("#")]
