"""Experiment harness: configs, runs, evaluation, landscapes and sweeps."""
from .config import ALGOS, RunConfig, load_config
from .evaluate import EvalReport, SeedEval, evaluate
from .landscape import landscape
from .run import run
from .sweep import sweep

__all__ = ["ALGOS", "EvalReport", "RunConfig", "SeedEval", "evaluate", "landscape", "load_config", "run", "sweep"]
