"""Point robot navigating to the origin among random box obstacles."""
from __future__ import annotations

import numpy as np

from ..cmdp import DoneKind, EnvContract, TerminalStepError

GOAL_REWARD = 40.0
STEP_PENALTY = -0.1
CONSTRAINT_REWARD = -20.0
ARENA = 1.0


def inside_boxes(points: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Boolean mask, points (m, 2) against boxes (k, 4) as [x0, y0, x1, y1]."""
    if len(boxes) == 0:
        return np.zeros(len(points), dtype=bool)
    x = points[:, None, 0]
    y = points[:, None, 1]
    hit = (x >= boxes[:, 0]) & (x <= boxes[:, 2]) & (y >= boxes[:, 1]) & (y <= boxes[:, 3])
    return hit.any(axis=1)


def out_of_bounds(points: np.ndarray) -> np.ndarray:
    return np.any(np.abs(points) > ARENA, axis=-1)


def box_distance(point: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Euclidean distance from a point to each box (0 inside)."""
    dx = np.maximum(np.maximum(boxes[:, 0] - point[0], 0.0), point[0] - boxes[:, 2])
    dy = np.maximum(np.maximum(boxes[:, 1] - point[1], 0.0), point[1] - boxes[:, 3])
    return np.hypot(dx, dy)


class PointNavEnv(EnvContract):
    """Arena ``[-1, 1]^2``, goal disk of radius ``goal_radius`` at the origin.

    The action is the fraction of ``step_size`` travelled along x and y.
    Leaving the arena or touching an obstacle is constraint-terminal.
    Observation: vector to the goal followed by a ``grid x grid`` local
    occupancy grid (1 = obstacle or outside the arena), row-major with y
    increasing along rows.
    """

    act_dim = 2

    def __init__(
        self,
        n_obstacles: int = 3,
        obstacle_size: tuple[float, float] = (0.1, 0.3),
        goal_radius: float = 0.1,
        goal_clearance: float = 0.05,
        step_size: float = 0.05,
        horizon: int = 200,
        reward_mode: str = "sparse",
        grid: int = 11,
        fov: float = 0.4,
        gamma: float = 0.99,
        gamma_c: float = 0.8,
        seed=None,
    ):
        if reward_mode not in ("sparse", "dense"):
            raise ValueError(f"reward_mode must be 'sparse' or 'dense', got {reward_mode!r}")
        self.n_obstacles = n_obstacles
        self.obstacle_size = tuple(obstacle_size)
        self.goal_radius = goal_radius
        self.goal_clearance = goal_clearance
        self.step_size = step_size
        self.horizon = horizon
        self.reward_mode = reward_mode
        self.grid = grid
        self.fov = fov
        self.gamma, self.gamma_c = gamma, gamma_c
        self.obs_dim = 2 + grid * grid
        self.act_low = -np.ones(2)
        self.act_high = np.ones(2)
        # dense: -0.1 * |d| is smallest at the arena corners
        self.reward_floor = STEP_PENALTY if reward_mode == "sparse" else STEP_PENALTY * np.sqrt(2.0) * ARENA
        cell = fov / grid
        offs = (np.arange(grid) - (grid - 1) / 2.0) * cell
        gx, gy = np.meshgrid(offs, offs)
        self._grid_offsets = np.stack([gx.ravel(), gy.ravel()], axis=1)
        self.rng = np.random.default_rng(seed)
        self.obstacles = np.zeros((0, 4))
        self.pos = np.zeros(2)
        self.t = 0
        self.done = True

    # -- layout ---------------------------------------------------------
    def sample_obstacles(self) -> np.ndarray:
        lo, hi = self.obstacle_size
        boxes = []
        keep_out = self.goal_radius + self.goal_clearance
        while len(boxes) < self.n_obstacles:
            w, h = self.rng.uniform(lo, hi, size=2)
            cx = self.rng.uniform(-ARENA + w / 2, ARENA - w / 2)
            cy = self.rng.uniform(-ARENA + h / 2, ARENA - h / 2)
            box = np.array([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2])
            if box_distance(np.zeros(2), box[None])[0] > keep_out:
                boxes.append(box)
        return np.array(boxes).reshape(-1, 4)

    def sample_start(self) -> np.ndarray:
        while True:
            p = self.rng.uniform(-ARENA, ARENA, size=2)
            if np.linalg.norm(p) >= self.goal_radius and not inside_boxes(p[None], self.obstacles)[0]:
                return p

    def occupancy(self, pos: np.ndarray | None = None) -> np.ndarray:
        pts = (self.pos if pos is None else pos) + self._grid_offsets
        return (out_of_bounds(pts) | inside_boxes(pts, self.obstacles)).astype(np.float64)

    def observe(self) -> np.ndarray:
        return np.concatenate([-self.pos, self.occupancy()])

    # -- contract -------------------------------------------------------
    def reset(self, rng: np.random.Generator | None = None, obstacles=None, start=None) -> np.ndarray:
        if rng is not None:
            self.rng = rng
        self.obstacles = self.sample_obstacles() if obstacles is None else np.asarray(obstacles, float).reshape(-1, 4)
        self.pos = self.sample_start() if start is None else np.asarray(start, dtype=np.float64).copy()
        self.t = 0
        self.done = False
        return self.observe()

    def constraint_free_reward(self, pos: np.ndarray) -> float:
        dist = float(np.linalg.norm(pos))
        if dist < self.goal_radius:
            return GOAL_REWARD
        return STEP_PENALTY if self.reward_mode == "sparse" else STEP_PENALTY * dist

    def step(self, action):
        if self.done:
            raise TerminalStepError("episode has ended; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64).ravel(), -1.0, 1.0)
        self.pos = self.pos + a * self.step_size
        self.t += 1
        if out_of_bounds(self.pos) or inside_boxes(self.pos[None], self.obstacles)[0]:
            kind, r = DoneKind.CONSTRAINT, CONSTRAINT_REWARD
        else:
            r = self.constraint_free_reward(self.pos)
            if r == GOAL_REWARD:
                kind = DoneKind.GOAL
            elif self.t >= self.horizon:
                kind = DoneKind.TIMEOUT
            else:
                kind = DoneKind.NONE
        self.done = kind is not DoneKind.NONE
        return self.observe(), r, kind
