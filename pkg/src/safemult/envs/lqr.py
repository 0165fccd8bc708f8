"""Fixed linear-feedback point robot used to draw exact return landscapes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..cmdp import DoneKind
from .pointnav import (
    ARENA,
    CONSTRAINT_REWARD,
    GOAL_REWARD,
    STEP_PENALTY,
    inside_boxes,
    out_of_bounds,
)

# Three gray boxes around the goal; each casts a wedge of doomed start states.
DEFAULT_OBSTACLES = np.array(
    [
        [0.25, -0.15, 0.40, 0.25],
        [-0.55, 0.35, -0.25, 0.50],
        [-0.35, -0.70, -0.10, -0.45],
    ]
)


@dataclass
class LqrLandscapeEnv:
    """Single-integrator robot under ``u = -K x`` with the step length capped
    at ``step_size``. With ``gain`` in (0, 1] the closed-loop pole ``1 - K``
    is real and nonnegative, so the robot approaches the goal without
    overshoot along a straight line.
    """

    obstacles: np.ndarray = None
    gain: float = 0.5
    step_size: float = 0.05
    goal_radius: float = 0.1
    horizon: int = 200
    gamma: float = 0.99

    def __post_init__(self):
        self.obstacles = DEFAULT_OBSTACLES.copy() if self.obstacles is None else np.asarray(self.obstacles, float).reshape(-1, 4)
        self.reward_floor = STEP_PENALTY

    def policy(self, pos: np.ndarray) -> np.ndarray:
        u = -self.gain * pos
        norm = np.linalg.norm(u, axis=-1, keepdims=True)
        scale = np.minimum(1.0, self.step_size / np.maximum(norm, 1e-300))
        return u * scale

    def rollout(self, start) -> tuple[float, float, DoneKind, int]:
        """Return ``(raw_return, clipped_return, done_kind, steps)``."""
        pos = np.asarray(start, dtype=np.float64).copy()
        if out_of_bounds(pos) or inside_boxes(pos[None], self.obstacles)[0]:
            return CONSTRAINT_REWARD, self.reward_floor, DoneKind.CONSTRAINT, 0
        if np.linalg.norm(pos) < self.goal_radius:
            return GOAL_REWARD, GOAL_REWARD, DoneKind.GOAL, 0
        raw = clipped = 0.0
        disc = 1.0
        for t in range(1, self.horizon + 1):
            pos = pos + self.policy(pos)
            if out_of_bounds(pos) or inside_boxes(pos[None], self.obstacles)[0]:
                raw += disc * CONSTRAINT_REWARD
                clipped += disc * self.reward_floor
                return raw, clipped, DoneKind.CONSTRAINT, t
            if np.linalg.norm(pos) < self.goal_radius:
                raw += disc * GOAL_REWARD
                clipped += disc * GOAL_REWARD
                return raw, clipped, DoneKind.GOAL, t
            raw += disc * STEP_PENALTY
            clipped += disc * STEP_PENALTY
            disc *= self.gamma
        return raw, clipped, DoneKind.TIMEOUT, self.horizon


@dataclass
class Landscape:
    xs: np.ndarray
    ys: np.ndarray
    raw_return: np.ndarray
    clipped_return: np.ndarray
    violation: np.ndarray
    kinds: np.ndarray
    #: fused target: clipped return on safe cells, the landscape minimum on violating cells
    ground_truth: np.ndarray
    floor: float

    @property
    def points(self) -> np.ndarray:
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


def grid_axis(n: int) -> np.ndarray:
    """Cell centers of an ``n``-cell partition of the arena."""
    h = 2.0 * ARENA / n
    return -ARENA + h * (np.arange(n) + 0.5)


def lqr_ground_truth(env: LqrLandscapeEnv, n: int = 64) -> Landscape:
    """Exact per-cell returns on an ``n x n`` grid of start states.

    Arrays are indexed ``[row, col]`` with ``row`` along y.
    """
    xs = grid_axis(n)
    ys = grid_axis(n)
    raw = np.empty((n, n))
    clipped = np.empty((n, n))
    kinds = np.empty((n, n), dtype=object)
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            r, c, k, _ = env.rollout((x, y))
            raw[i, j], clipped[i, j], kinds[i, j] = r, c, k.value
    violation = kinds == DoneKind.CONSTRAINT.value
    floor = float(clipped.min())
    truth = np.where(violation, floor, clipped)
    return Landscape(xs, ys, raw, clipped, violation, kinds, truth, floor)


def boundary_mask(land: Landscape, obstacles: np.ndarray, cells: int = 2) -> np.ndarray:
    """Cells whose centers lie within ``cells`` grid spacings of an obstacle edge."""
    h = land.xs[1] - land.xs[0]
    pts = land.points
    reach = cells * h
    near = np.zeros(len(pts), dtype=bool)
    for x0, y0, x1, y1 in obstacles:
        dx = np.maximum(np.maximum(x0 - pts[:, 0], 0.0), pts[:, 0] - x1)
        dy = np.maximum(np.maximum(y0 - pts[:, 1], 0.0), pts[:, 1] - y1)
        outside = np.hypot(dx, dy)
        inside = np.minimum.reduce([pts[:, 0] - x0, x1 - pts[:, 0], pts[:, 1] - y0, y1 - pts[:, 1]])
        dist = np.where(outside > 0, outside, np.maximum(inside, 0.0))
        near |= dist <= reach
    return near.reshape(len(land.ys), len(land.xs))


def discontinuity_mask(land: Landscape, cells: int = 2) -> np.ndarray:
    """Cells within ``cells`` (Chebyshev) of a change in the violation label."""
    v = land.violation
    edge = np.zeros_like(v)
    edge[:, 1:] |= v[:, 1:] != v[:, :-1]
    edge[:, :-1] |= v[:, 1:] != v[:, :-1]
    edge[1:, :] |= v[1:, :] != v[:-1, :]
    edge[:-1, :] |= v[1:, :] != v[:-1, :]
    return ndimage.binary_dilation(edge, structure=np.ones((2 * cells + 1, 2 * cells + 1), dtype=bool))
