"""Constrained RL with a multiplicative safety/reward value function."""
from . import cmdp, critics, envs, numerics, ppo, sac

__version__ = "0.1.0"

__all__ = ["cmdp", "critics", "envs", "numerics", "ppo", "sac"]
