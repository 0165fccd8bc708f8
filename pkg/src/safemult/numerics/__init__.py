from . import autodiff
from .adam import Adam, AdamState, adam_step
from .autodiff import Tensor, backward, grad, stop_gradient
from .mlp import Mlp
from .snapshot import dumps, load, loads, save

__all__ = [
    "Adam",
    "AdamState",
    "Mlp",
    "Tensor",
    "adam_step",
    "autodiff",
    "backward",
    "dumps",
    "grad",
    "load",
    "loads",
    "save",
    "stop_gradient",
]
