"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence, lr: float = 1e-3, **kw) -> "AdamState":
        arrays = [p.data if isinstance(p, Tensor) else np.asarray(p) for p in params]
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], lr=lr, **kw)


def adam_step(state: AdamState, params: Sequence, grads: Sequence[np.ndarray], names=None) -> list:
    """Apply one Adam update in place and return ``params``.

    ``params`` may be :class:`Tensor` objects or plain arrays (updated in
    place either way).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(
            f"got {len(params)} params, {len(grads)} grads and {len(state.m)} moment slots"
        )
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            label = names[i] if names is not None else getattr(params[i], "name", None) or f"#{i}"
            raise FloatingPointError(f"non-finite gradient in parameter block {label}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        arr = p.data if isinstance(p, Tensor) else p
        if arr.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {arr.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return list(params)


@dataclass
class Adam:
    """Convenience wrapper owning the parameter list and its state."""

    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float | None = None
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.state = AdamState.for_params(
            self.params, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        adam_step(self.state, self.params, grads)
        self.zero_grad()
