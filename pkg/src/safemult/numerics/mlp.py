"""Multilayer perceptrons on top of the autodiff tape."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = ("tanh", "relu")
HEADS = ("identity", "sigmoid", "squash")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class Mlp:
    """Fully connected net ``sizes[0] -> ... -> sizes[-1]``.

    Parameters are stored as ``[W1, b1, W2, b2, ...]`` with ``W`` of shape
    (in, out). Biases start at zero.
    """

    sizes: list[int]
    activation: str = "relu"
    head: str = "identity"
    seed: int | np.random.Generator | None = None
    params: list[Tensor] = field(init=False, repr=False)

    def __post_init__(self):
        self.sizes = [int(n) for n in self.sizes]
        if len(self.sizes) < 2 or any(n <= 0 for n in self.sizes):
            raise ValueError(f"layer sizes must be >= 2 positive integers, got {self.sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}; expected one of {HEADS}")
        rng = np.random.default_rng(self.seed)
        self.params = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            self.params.append(Tensor(glorot_uniform(rng, n_in, n_out), True, name=f"W{i}"))
            self.params.append(Tensor(np.zeros(n_out), True, name=f"b{i}"))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def _check_input(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"input shape {x.shape} does not match first layer size {self.in_dim} "
                f"(layer sizes {self.sizes})"
            )

    def forward(self, x, track_params: bool = True) -> Tensor:
        """Record the forward pass on the tape.

        ``x`` may be a 1-d vector or a (batch, in) matrix; the output keeps the
        same leading shape. With ``track_params=False`` the weights enter the
        graph as constants, so only gradients w.r.t. ``x`` are produced.
        """
        x = ad.as_tensor(x)
        self._check_input(x.data)
        squeeze = x.data.ndim == 1
        h = ad.reshape(x, (1, -1)) if squeeze else x
        params = self.params if track_params else [Tensor(p.data) for p in self.params]
        n_layers = len(params) // 2
        for i in range(n_layers):
            h = ad.linear(h, params[2 * i], params[2 * i + 1])
            if i < n_layers - 1:
                h = ad.tanh(h) if self.activation == "tanh" else ad.relu(h)
        if self.head == "sigmoid":
            h = ad.sigmoid(h)
        elif self.head == "squash":
            h = ad.tanh(h)
        return ad.reshape(h, (-1,)) if squeeze else h

    __call__ = forward

    def predict(self, x) -> np.ndarray:
        """Graph-free evaluation with plain numpy."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        h = x
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            h = h @ self.params[2 * i].data + self.params[2 * i + 1].data
            if i < n_layers - 1:
                h = np.tanh(h) if self.activation == "tanh" else np.maximum(h, 0.0)
        if self.head == "sigmoid":
            h = ad._stable_sigmoid(h)
        elif self.head == "squash":
            h = np.tanh(h)
        return h

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} values, got {flat.size}")
        i = 0
        for p in self.params:
            p.data = flat[i : i + p.size].reshape(p.shape).copy()
            i += p.size

    def copy(self) -> "Mlp":
        twin = Mlp(self.sizes, self.activation, self.head, seed=0)
        twin.set_flat(self.get_flat())
        return twin

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
