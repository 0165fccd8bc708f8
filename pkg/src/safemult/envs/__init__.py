from .chain import ChainMdp, bellman_residual, chain_reachability, transition_matrix
from .lqr import Landscape, LqrLandscapeEnv, lqr_ground_truth
from .pointnav import PointNavEnv

__all__ = [
    "ChainMdp",
    "Landscape",
    "LqrLandscapeEnv",
    "PointNavEnv",
    "bellman_residual",
    "chain_reachability",
    "lqr_ground_truth",
    "transition_matrix",
]
