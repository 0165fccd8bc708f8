"""Command line entry point: ``safemult train|eval|landscape|sweep``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..sac import ConfigError
from .config import load_config
from .evaluate import evaluate
from .landscape import REGIONS, landscape, median_mse
from .run import eval_factory, load_policy, run
from .sweep import parse_values, sweep


def _train(args) -> int:
    res = run(load_config(args.config))
    print(res.report.summary())
    for s in res.seeds:
        if s.aborted:
            print(f"seed {s.seed} aborted: {s.error}", file=sys.stderr)
    return 0 if res.ok else 1


def _eval(args) -> int:
    cfg = load_config(args.config)
    policy = load_policy(args.checkpoint)
    seeds = args.seeds if args.seeds else cfg.seeds
    rep = evaluate(policy.mean_action, eval_factory(cfg), args.episodes or cfg.eval_episodes, seeds)
    print("seed,episodes,reward_mean,violation_pct,success_pct,timeout_pct")
    for s in rep.per_seed:
        print(f"{s.seed},{s.episodes},{s.reward_mean},{s.violation_pct},{s.success_pct},{s.timeout_pct}")
    print(rep.summary(), file=sys.stderr)
    return 0


def _landscape(args) -> int:
    fits = landscape(load_config(args.config))
    print("model,region,median_mse")
    for model in ("baseline", "mult"):
        for region in REGIONS:
            print(f"{model},{region},{median_mse(fits, model, region)}")
    return 0


def _sweep(args) -> int:
    cfg = load_config(args.config)
    results = sweep(cfg, args.param, parse_values(args.param, args.values))
    for res in results:
        print(f"{args.param}={getattr(res.config, args.param)}: {res.report.summary()}")
    return 0 if all(r.ok for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safemult", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("train", help="train every seed of a config")
    t.add_argument("config")
    t.set_defaults(func=_train)
    e = sub.add_parser("eval", help="evaluate a checkpoint with the mean action")
    e.add_argument("checkpoint", help="checkpoint directory containing policy.mlp and state.json")
    e.add_argument("config")
    e.add_argument("--episodes", type=int, default=None)
    e.add_argument("--seeds", type=int, nargs="*", default=None)
    e.set_defaults(func=_eval)
    la = sub.add_parser("landscape", help="fit the LQR return landscape")
    la.add_argument("config")
    la.set_defaults(func=_landscape)
    s = sub.add_parser("sweep", help="grid sweep over one config key")
    s.add_argument("config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma separated, e.g. 0.1,1,5,20")
    s.set_defaults(func=_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
