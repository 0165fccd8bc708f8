"""Seeded training runs: metrics, checkpoints, evaluation and the report."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from .. import ppo, sac
from ..cmdp import EnvContract
from ..envs import ChainMdp, PointNavEnv
from ..numerics import load as load_mlp
from ..numerics import save as save_mlp
from ..policies import SquashedGaussianPolicy
from ..sac import METRIC_COLUMNS
from .config import RunConfig, dump_config
from .evaluate import EvalReport, SeedEval, evaluate
from .plotting import plot_curves

log = logging.getLogger(__name__)

EVAL_COLUMNS = ("step", "episodes", "reward_mean", "violation_pct", "success_pct", "timeout_pct")
REPORT_COLUMNS = ("seed", "status", "episodes", "reward_mean", "violation_pct", "success_pct", "timeout_pct")


def make_env(config: RunConfig, seed: int) -> EnvContract:
    if config.env == "pointnav":
        return PointNavEnv(
            n_obstacles=config.n_obstacles, reward_mode=config.reward_mode, horizon=config.horizon,
            step_size=config.step_size, gamma=config.gamma, gamma_c=config.gamma_c, seed=seed,
        )
    return ChainMdp(n=config.chain_n, horizon=config.horizon, gamma=config.gamma, gamma_c=config.gamma_c, seed=seed)


def eval_factory(config: RunConfig) -> Callable[[int], EnvContract]:
    """Evaluation envs live on seeds disjoint from the training ones."""
    return lambda seed: make_env(config, config.eval_seed_offset + seed)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


class CsvWriter:
    """Append rows with a fixed header; floats are written with ``repr``."""

    def __init__(self, path: Path, columns):
        self.path, self.columns = path, tuple(columns)
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(self.columns)

    def write(self, row: dict) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(row[c]) for c in self.columns])


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: _parse(v) for k, v in r.items()} for r in rows]


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


def save_checkpoint(agent, config: RunConfig, seed: int, step: int, root: Path) -> Path:
    path = root / f"step_{step:07d}"
    path.mkdir(parents=True, exist_ok=True)
    for name, net in agent.nets().items():
        save_mlp(net, path / f"{name}.mlp")
    state = {
        "algo": config.algo,
        "seed": seed,
        "step": step,
        "lambda": agent.lam.value,
        "v_min": agent.v_min.value,
        "q_min": agent.q_min.value,
        "policy": agent.policy.state(),
        "config": config.to_dict(),
    }
    (path / "state.json").write_text(json.dumps(state, indent=2))
    return path


def load_policy(checkpoint: str | Path) -> SquashedGaussianPolicy:
    path = Path(checkpoint)
    state = json.loads((path / "state.json").read_text())
    return SquashedGaussianPolicy.from_state(state["policy"], load_mlp(path / "policy.mlp"))


@dataclass
class SeedResult:
    seed: int
    rows: list[dict] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    final: SeedEval | None = None
    error: str | None = None

    @property
    def aborted(self) -> bool:
        return self.error is not None


@dataclass
class RunResult:
    config: RunConfig
    seeds: list[SeedResult]
    report: EvalReport

    @property
    def ok(self) -> bool:
        return not any(s.aborted for s in self.seeds)


def _checkpoint_steps(config: RunConfig) -> list[int]:
    steps = list(range(config.eval_every, config.budget + 1, config.eval_every)) if config.eval_every > 0 else []
    if config.budget > 0 and config.budget not in steps:
        steps.append(config.budget)
    return steps


def run_seed(config: RunConfig, seed: int, out: Path) -> SeedResult:
    out.mkdir(parents=True, exist_ok=True)
    res = SeedResult(seed)
    metrics = CsvWriter(out / "metrics.csv", METRIC_COLUMNS)
    evals = CsvWriter(out / "eval.csv", EVAL_COLUMNS)
    ckpt_root = out / "checkpoints"
    factory = eval_factory(config)

    def on_row(row):
        res.rows.append(row)
        metrics.write(row)

    def on_checkpoint(step, agent):
        save_checkpoint(agent, config, seed, step, ckpt_root)
        if config.eval_episodes > 0:
            rep = evaluate(agent.policy.mean_action, factory, config.eval_episodes, [seed])
            se = rep.per_seed[0]
            row = {"step": step} | {k: getattr(se, k) for k in EVAL_COLUMNS[1:]}
            res.evals.append(row)
            evals.write(row)
            res.final = se

    acfg = config.algo_config()
    steps = tuple(_checkpoint_steps(config))
    try:
        if config.family == "sac":
            sac.train(acfg, make_env(config, seed), config.budget, seed=seed, log_every=config.log_every,
                      on_row=on_row, checkpoints=steps, on_checkpoint=on_checkpoint)
        else:
            ppo.train(acfg, lambda w: make_env(config, 10_000 * (seed + 1) + w), config.budget, seed=seed,
                      on_row=on_row, checkpoints=steps, on_checkpoint=on_checkpoint)
    except (FloatingPointError, AssertionError, ValueError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        (out / "error.txt").write_text(res.error + "\n")
        log.error("seed %d aborted: %s", seed, res.error)
    return res


def run(config: RunConfig) -> RunResult:
    """Train every seed, then write ``report.csv``, ``report.txt`` and ``curves.png``."""
    root = Path(config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    dump_config(config, root / "config.yaml")
    results = []
    for seed in config.seeds:
        t0 = time.perf_counter()
        res = run_seed(config, seed, root / f"seed_{seed}")
        log.info("%s seed %d finished in %.1fs", config.algo, seed, time.perf_counter() - t0)
        results.append(res)
    report = EvalReport([r.final for r in results if r.final is not None and not r.aborted])
    write_report(config, results, report, root)
    plot_curves({r.seed: r.rows for r in results}, root / "curves.png", title=config.algo)
    return RunResult(config, results, report)


def write_report(config: RunConfig, results: list[SeedResult], report: EvalReport, root: Path) -> None:
    with open(root / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in results:
            status = "aborted" if r.aborted else "ok"
            if r.final is None:
                w.writerow([r.seed, status, 0, "", "", "", ""])
            else:
                f = asdict(r.final)
                w.writerow([r.seed, status] + [_fmt(f[c]) for c in REPORT_COLUMNS[2:]])
        for label, idx in (("mean", 0), ("std", 1)):
            w.writerow([label, "", report.episodes, _fmt(report.reward[idx]), _fmt(report.violation_pct[idx]),
                        _fmt(report.success_pct[idx]), _fmt(report.timeout_pct[idx])])
    lines = [f"algo {config.algo}, env {config.env}, budget {config.budget}", report.summary()]
    lines += [f"seed {r.seed} aborted: {r.error}" for r in results if r.aborted]
    (root / "report.txt").write_text("\n".join(lines) + "\n")
