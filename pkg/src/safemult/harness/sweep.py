"""One-parameter grid sweeps over a base config."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .config import RunConfig, parse_value
from .plotting import plot_sweep
from .run import RunResult, _fmt, run

SWEEP_COLUMNS = ("value", "status", "reward_mean", "reward_std", "violation_pct_mean", "violation_pct_std",
                 "success_pct_mean", "success_pct_std", "timeout_pct_mean", "timeout_pct_std")


def sweep(config: RunConfig, param: str, values: Sequence) -> list[RunResult]:
    """Run ``config`` once per value of ``param``; each run gets its own subdirectory."""
    root = Path(config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    results = []
    for v in values:
        cfg = config.replace(**{param: v, "out_dir": str(root / f"{param}={v}")})
        results.append(run(cfg))
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("param",) + SWEEP_COLUMNS)
        for v, res in zip(values, results):
            rep = res.report
            stats = [x for pair in (rep.reward, rep.violation_pct, rep.success_pct, rep.timeout_pct) for x in pair]
            w.writerow([param, v, "ok" if res.ok else "aborted"] + [_fmt(x) for x in stats])
    keys = {"reward": "reward", "violations %": "violation_pct", "success %": "success_pct"}
    plot_sweep(
        param, list(values),
        {k: [getattr(r.report, a)[0] for r in results] for k, a in keys.items()},
        {k: [getattr(r.report, a)[1] for r in results] for k, a in keys.items()},
        root / "sweep.png",
    )
    return results


def parse_values(param: str, text: str) -> list:
    """``"0.1,1,5"`` -> ``[0.1, 1, 5]`` using YAML scalar rules."""
    return [parse_value(param, t.strip()) for t in text.split(",") if t.strip()]
