"""Multiplicative fusion of safety and reward critics, advantages and duals.

The functions here accept floats, numpy arrays or autodiff tensors, so the same
code path is used for bookkeeping and inside differentiated losses.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.mlp import Mlp

ADVANTAGE_VERSIONS = ("V1", "V2", "V3")


def _values(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


class RunningMin:
    """Running lower bound on a critic; starts at ``init`` (default 0)."""

    def __init__(self, init: float = 0.0):
        self.value = float(init)

    def update(self, values) -> float:
        vals = _values(values)
        if vals.size:
            self.value = min(self.value, float(np.min(vals)))
        return self.value

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"RunningMin({self.value!r})"


def _floor(raw, floor) -> float:
    if isinstance(floor, RunningMin):
        return floor.update(raw)
    return min(float(floor), float(np.min(_values(raw)))) if _values(raw).size else float(floor)


def _check_prob(p, name: str) -> None:
    vals = _values(p)
    if np.any(vals < 0.0) or np.any(vals > 1.0) or np.any(np.isnan(vals)):
        raise ValueError(f"{name} must lie in [0, 1], got range [{vals.min()}, {vals.max()}]")


def v_mult(v_bar, v_min, phi):
    """``(v_bar - v_min) * (1 - phi) + v_min``.

    ``v_min`` is a float or a :class:`RunningMin`. Values of ``v_bar`` below
    the floor lower it first (the running minimum is updated), so the result
    always lies in ``[floor, v_bar]``.
    """
    _check_prob(phi, "safety probability")
    floor = _floor(v_bar, v_min)
    return (v_bar - floor) * (1.0 - phi) + floor


def q_mult(q_bar, q_min, psi):
    """Action-value counterpart of :func:`v_mult`."""
    return v_mult(q_bar, q_min, psi)


@dataclass
class CriticEvals:
    """Per-step critic quantities consumed by :func:`advantage`.

    Fields not needed by the chosen version may be left as ``None``.
    """

    v_mult_s: np.ndarray
    v_mult_next: np.ndarray | None = None
    q_mult: np.ndarray | None = None
    q_bar: np.ndarray | None = None
    q_min: float | None = None
    phi_next: np.ndarray | None = None


def _need(evals: CriticEvals, version: str, *names: str) -> None:
    missing = [n for n in names if getattr(evals, n) is None]
    if missing:
        raise ValueError(f"advantage {version} needs critic evaluations {missing}")


def advantage(version: str, r, d, r_c, evals: CriticEvals, gamma: float, gamma_c: float = 1.0) -> np.ndarray:
    """One-step multiplicative advantage.

    V1: ``r + gamma (1-d) V_mult(s') - V_mult(s)``
    V2: ``Q_mult(s, a) - V_mult(s)``
    V3: ``(Q - q_min) (1 - clamp(r_c + gamma_c (1-d) Phi(s'))) + q_min - V_mult(s)``
    """
    r, d, r_c = (np.asarray(x, dtype=np.float64) for x in (r, d, r_c))
    if version == "V1":
        _need(evals, version, "v_mult_next")
        return r + gamma * (1.0 - d) * evals.v_mult_next - evals.v_mult_s
    if version == "V2":
        _need(evals, version, "q_mult")
        return np.asarray(evals.q_mult) - evals.v_mult_s
    if version == "V3":
        _need(evals, version, "q_bar", "q_min", "phi_next")
        unsafe = np.clip(r_c + gamma_c * (1.0 - d) * evals.phi_next, 0.0, 1.0)
        return (evals.q_bar - evals.q_min) * (1.0 - unsafe) + evals.q_min - evals.v_mult_s
    raise ValueError(f"unknown advantage version {version!r}; expected one of {ADVANTAGE_VERSIONS}")


def gae(deltas, d, gamma: float, lam: float) -> np.ndarray:
    """GAE recursion over one episode's TD residuals.

    ``A_t = delta_t + gamma * lam * (1 - d_t) * A_{t+1}``; the recursion starts
    from zero after the last step.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    out = np.empty_like(deltas)
    acc = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * (1.0 - d[t]) * acc
        out[t] = acc
    return out


def gae_mult(r, d, r_c, evals: CriticEvals, gamma: float, lam: float, version: str = "V1", gamma_c: float = 1.0):
    """GAE where the residual is the chosen multiplicative advantage."""
    deltas = advantage(version, r, d, r_c, evals, gamma, gamma_c)
    return gae(deltas, d, gamma, lam)


def safety_target(r_c, d, gamma_c: float, psi_targ_next: Sequence, tol: float = 1e-9) -> np.ndarray:
    """``y_c = r_c + gamma_c (1 - d) max_i Psi_targ_i(s', a')``."""
    r_c = np.asarray(r_c, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if len(psi_targ_next) == 0:
        raise ValueError("need at least one target safety critic output")
    pess = np.max(np.stack([_values(p) for p in psi_targ_next]), axis=0)
    y = r_c + gamma_c * (1.0 - d) * pess
    if np.any(y < -tol) or np.any(y > 1.0 + tol):
        bad = y[(y < -tol) | (y > 1.0 + tol)]
        raise ValueError(f"safety targets outside [0, 1]: {bad[:5]} (r_c / d / target nets inconsistent)")
    return np.clip(y, 0.0, 1.0)


_BCE_EPS = 1e-12


def bce(pred, target):
    """Batch-mean binary cross-entropy; ``pred`` may be a tensor."""
    y = _values(target) if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if isinstance(pred, Tensor):
        p = ad.clip(pred, _BCE_EPS, 1.0 - _BCE_EPS)
        return -ad.mean(y * ad.log(p) + (1.0 - y) * ad.log(1.0 - p))
    p = np.clip(np.asarray(pred, dtype=np.float64), _BCE_EPS, 1.0 - _BCE_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


class LagrangeMultiplier:
    """Nonnegative dual variable updated by projected gradient ascent."""

    def __init__(self, init: float = 1.0, lr: float = 0.1, c_max: float = 0.0):
        if init < 0:
            raise ValueError(f"initial multiplier must be >= 0, got {init}")
        self.value = float(init)
        self.lr = float(lr)
        self.c_max = float(c_max)

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"LagrangeMultiplier(value={self.value!r}, lr={self.lr!r}, c_max={self.c_max!r})"


def dual_ascent(lam: LagrangeMultiplier, level: float) -> float:
    """``lambda <- max(0, lambda + lr * level)``; returns the new value.

    ``level`` is the measured constraint excess (already net of ``c_max``).
    """
    lam.value = max(0.0, lam.value + lam.lr * float(level))
    assert lam.value >= 0.0
    return lam.value


def polyak(target: Mlp, online: Mlp, rho: float) -> Mlp:
    """In-place ``target <- rho * target + (1 - rho) * online``."""
    if target.sizes != online.sizes:
        raise ValueError(f"target sizes {target.sizes} differ from online sizes {online.sizes}")
    for pt, po in zip(target.params, online.params):
        pt.data *= rho
        pt.data += (1.0 - rho) * po.data
    return target
