"""Flat run configuration and its YAML loader."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from ..ppo import PpoConfig
from ..sac import ConfigError, SacConfig

ALGOS = (
    "sac_base",
    "sac_lagrange",
    "sac_mult",
    "sac_mult_clipped",
    "sac_mult_lagrange",
    "ppo_base",
    "ppo_lagrange",
    "ppo_v1",
    "ppo_v2",
    "ppo_v3",
)
ENVS = ("pointnav", "chain")


@dataclass
class RunConfig:
    algo: str = "sac_mult_lagrange"
    # environment
    env: str = "pointnav"
    n_obstacles: int = 2
    reward_mode: str = "sparse"
    horizon: int = 200
    step_size: float = 0.05
    chain_n: int = 7
    # seeds, budget and cadence
    seeds: list[int] = field(default_factory=lambda: [0])
    budget: int = 30_000
    log_every: int = 1000
    eval_every: int = 10_000
    eval_episodes: int = 50
    eval_seed_offset: int = 1000
    out_dir: str = "runs/default"
    # shared algorithm hyperparameters (None = the algorithm's own default)
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    lr: float | None = None
    gamma: float = 0.99
    gamma_c: float = 0.8
    lambda_init: float | None = None
    alpha_dual: float | None = None
    c_max: float = 0.0
    timeout_is_terminal: bool = False
    # SAC only
    alpha_ent: float = 0.01
    lambda_max: float = 5.0
    rho: float = 0.995
    rho_c: float = 0.995
    batch_size: int = 128
    warmup: int = 1000
    buffer_size: int = 100_000
    gradient_steps: int = 1
    # PPO only
    critic_lr: float = 1e-3
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatch_size: int = 256
    rollout_len: int = 2048
    n_workers: int = 1
    n_penalty_samples: int = 4
    target_kl: float | None = 0.02
    init_log_std: float = -0.5
    max_grad_norm: float = 0.5
    # landscape
    grid: int = 64
    lqr_gain: float = 0.5
    landscape_epochs: int = 1000
    landscape_lr: float = 3e-3
    landscape_obstacles: str = "default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {', '.join(ALGOS)}")
        if self.env not in ENVS:
            raise ConfigError(f"unknown env {self.env!r}; expected one of {', '.join(ENVS)}")
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if self.landscape_obstacles not in ("default", "none"):
            raise ConfigError("landscape_obstacles must be 'default' or 'none'")
        self.algo_config()  # algorithm-level checks

    @property
    def family(self) -> str:
        return self.algo.split("_", 1)[0]

    @property
    def variant(self) -> str:
        return self.algo.split("_", 1)[1]

    def algo_config(self) -> SacConfig | PpoConfig:
        """Translate into the algorithm module's config.

        Baseline algos keep the multiplicative fields at their defaults; the
        algorithm modules ignore them.
        """
        common = dict(hidden=tuple(self.hidden), gamma=self.gamma, gamma_c=self.gamma_c, c_max=self.c_max,
                      timeout_is_terminal=self.timeout_is_terminal)
        for k in ("lr", "lambda_init", "alpha_dual"):
            if getattr(self, k) is not None:
                common[k] = getattr(self, k)
        if self.family == "sac":
            return SacConfig(
                variant=self.variant, alpha_ent=self.alpha_ent, lambda_max=self.lambda_max, rho=self.rho,
                rho_c=self.rho_c, batch_size=self.batch_size, warmup=self.warmup, buffer_size=self.buffer_size,
                gradient_steps=self.gradient_steps, **common,
            )
        return PpoConfig(
            variant=self.variant, critic_lr=self.critic_lr, clip_eps=self.clip_eps, gae_lambda=self.gae_lambda,
            epochs=self.epochs, minibatch_size=self.minibatch_size, rollout_len=self.rollout_len,
            n_workers=self.n_workers, n_penalty_samples=self.n_penalty_samples, target_kl=self.target_kl,
            init_log_std=self.init_log_std, max_grad_norm=self.max_grad_norm, **common,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def from_dict(data: dict) -> RunConfig:
    unknown = sorted(set(data) - set(FIELD_NAMES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    nested = sorted(k for k, v in data.items() if isinstance(v, dict))
    if nested:
        raise ConfigError(f"config must be flat; nested values for: {', '.join(nested)}")
    return RunConfig(**data)


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key-value mapping at top level")
    return from_dict(data)


def dump_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))


def parse_value(key: str, text: str):
    """Parse one sweep value with YAML scalar rules, then check the key."""
    if key not in FIELD_NAMES:
        raise ConfigError(f"unknown config keys: {key}")
    return yaml.safe_load(text)
