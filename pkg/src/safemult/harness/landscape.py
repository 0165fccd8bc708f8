"""Fit a plain value net and a multiplicative pair to the LQR return landscape."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..critics import bce, v_mult
from ..envs.lqr import Landscape, LqrLandscapeEnv, boundary_mask, discontinuity_mask, lqr_ground_truth
from ..numerics import Adam, Mlp
from ..numerics import autodiff as ad
from .config import RunConfig
from .plotting import plot_landscape

log = logging.getLogger(__name__)

REGIONS = ("global", "boundary", "discontinuity")
MSE_COLUMNS = ("seed", "model", "region", "cells", "mse")


def landscape_env(config: RunConfig) -> LqrLandscapeEnv:
    obstacles = np.zeros((0, 4)) if config.landscape_obstacles == "none" else None
    return LqrLandscapeEnv(obstacles=obstacles, gain=config.lqr_gain, step_size=config.step_size,
                           horizon=config.horizon, gamma=config.gamma)


def _fit(net: Mlp, x: np.ndarray, target: np.ndarray, loss: str, epochs: int, lr: float) -> None:
    opt = Adam(net.params, lr=lr)
    for _ in range(epochs):
        pred = net.forward(x)[:, 0]
        value = bce(pred, target) if loss == "bce" else ad.mean(ad.square(pred - target))
        opt.zero_grad()
        ad.backward(value)
        opt.step()


@dataclass
class Fit:
    seed: int
    baseline: np.ndarray
    mult: np.ndarray
    reward: np.ndarray
    safety: np.ndarray
    mse: dict[tuple[str, str], tuple[int, float]]


def fit_landscape(land: Landscape, obstacles: np.ndarray, config: RunConfig, seed: int) -> Fit:
    """Baseline: one net regressed on the fused ground truth. Multiplicative:
    a reward net on clipped returns and a sigmoid safety net on violation
    labels, combined by ``v_mult`` with the floor at the smallest reward
    prediction."""
    x = land.points
    shape = land.ground_truth.shape
    ss = np.random.SeedSequence(seed).spawn(3)
    sizes = [2, *config.hidden, 1]
    base = Mlp(sizes, activation="tanh", seed=ss[0])
    reward = Mlp(sizes, activation="tanh", seed=ss[1])
    safety = Mlp(sizes, activation="tanh", head="sigmoid", seed=ss[2])
    epochs, lr = config.landscape_epochs, config.landscape_lr
    _fit(base, x, land.ground_truth.ravel(), "mse", epochs, lr)
    _fit(reward, x, land.clipped_return.ravel(), "mse", epochs, lr)
    _fit(safety, x, land.violation.ravel().astype(np.float64), "bce", epochs, lr)
    b = base.predict(x)[:, 0].reshape(shape)
    r = reward.predict(x)[:, 0].reshape(shape)
    p = safety.predict(x)[:, 0].reshape(shape)
    m = v_mult(r, float(min(0.0, r.min())), p)
    masks = {
        "global": np.ones(shape, dtype=bool),
        "boundary": boundary_mask(land, obstacles),
        "discontinuity": discontinuity_mask(land),
    }
    mse = {}
    for name, pred in (("baseline", b), ("mult", m)):
        for region, mask in masks.items():
            n = int(mask.sum())
            err = float(np.mean((pred[mask] - land.ground_truth[mask]) ** 2)) if n else float("nan")
            mse[(name, region)] = (n, err)
    return Fit(seed, b, m, r, p, mse)


def landscape(config: RunConfig) -> list[Fit]:
    """Ground truth plus both fits for every seed; writes CSVs and a heatmap."""
    root = Path(config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    env = landscape_env(config)
    land = lqr_ground_truth(env, config.grid)
    fits = []
    with open(root / "landscape_mse.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MSE_COLUMNS)
        for seed in config.seeds:
            fit = fit_landscape(land, env.obstacles, config, seed)
            fits.append(fit)
            for (model, region), (n, err) in fit.mse.items():
                w.writerow([seed, model, region, n, repr(err)])
            write_cells(land, fit, root / f"landscape_seed_{seed}.csv")
            log.info("landscape seed %d: boundary mse baseline %.4g, mult %.4g", seed,
                     fit.mse[("baseline", "boundary")][1], fit.mse[("mult", "boundary")][1])
    first = fits[0]
    plot_landscape(land.xs, land.ys, {"ground truth": land.ground_truth, "baseline fit": first.baseline,
                                      "multiplicative fit": first.mult}, env.obstacles, root / "landscape.png")
    return fits


def write_cells(land: Landscape, fit: Fit, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("x", "y", "ground_truth", "baseline", "mult"))
        for i, y in enumerate(land.ys):
            for j, x in enumerate(land.xs):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(land.ground_truth[i, j])),
                            repr(float(fit.baseline[i, j])), repr(float(fit.mult[i, j]))])


def median_mse(fits: list[Fit], model: str, region: str) -> float:
    return float(np.median([f.mse[(model, region)][1] for f in fits]))
