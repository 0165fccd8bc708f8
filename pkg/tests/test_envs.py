import numpy as np
import pytest

from safemult.cmdp import DoneKind, TerminalStepError
from safemult.envs import ChainMdp, LqrLandscapeEnv, PointNavEnv, bellman_residual, chain_reachability, lqr_ground_truth
from safemult.envs.lqr import DEFAULT_OBSTACLES, boundary_mask, discontinuity_mask
from safemult.envs.pointnav import inside_boxes


# -- chain ---------------------------------------------------------------
def test_chain_reachability_always_right_and_left():
    chain = ChainMdp(n=7)
    right = chain_reachability(chain, np.ones(7), 1.0)
    np.testing.assert_allclose(right[chain.interior], 1.0, atol=1e-12)
    left = chain_reachability(chain, np.zeros(7), 1.0)
    np.testing.assert_allclose(left[chain.interior], 0.0, atol=1e-12)


def test_chain_gamblers_ruin():
    chain = ChainMdp(n=5)
    phi = chain_reachability(chain, np.full(5, 0.5), 1.0)
    assert phi[2] == pytest.approx(0.5, abs=1e-10)
    # symmetric walk on 0..4 absorbed at both ends: P(hit 4 | s) = s / 4
    np.testing.assert_allclose(phi[chain.interior], chain.interior / 4, atol=1e-10)


def test_chain_discounted_against_linear_solve(rng):
    chain = ChainMdp(n=7)
    p = rng.uniform(0.1, 0.9, size=7)
    for gamma_c in (0.8, 1.0):
        phi = chain_reachability(chain, p, gamma_c)
        # oracle: solve (I - gamma_c P_II) phi_I = P_{I,C}
        idx = chain.interior
        P = np.zeros((7, 7))
        for s in idx:
            P[s, s + 1], P[s, s - 1] = p[s], 1 - p[s]
        A = np.eye(len(idx)) - gamma_c * P[np.ix_(idx, idx)]
        ref = np.linalg.solve(A, P[idx, 6])
        np.testing.assert_allclose(phi[idx], ref, atol=1e-10)
        assert bellman_residual(chain, p, phi, gamma_c) <= 1e-10


def test_chain_rejects_bad_rows():
    chain = ChainMdp(n=4)
    with pytest.raises(ValueError):
        chain_reachability(chain, np.full((4, 4), 0.5), 1.0)
    with pytest.raises(ValueError):
        chain_reachability(chain, np.ones(3), 1.0)


def test_chain_episode_contract():
    chain = ChainMdp(n=5, horizon=3, start=2, seed=0)
    chain.reset()
    kinds = []
    while True:
        _, r, kind = chain.step(np.array([0.0]))
        kinds.append(kind)
        if kind is not DoneKind.NONE:
            break
    assert len(kinds) <= 3
    with pytest.raises(TerminalStepError):
        chain.step(np.array([0.0]))
    chain.reset(state=3)
    _, r, kind = chain.step(np.array([1.0]))
    assert kind is DoneKind.CONSTRAINT and r == chain.constraint_reward


# -- pointnav --------------------------------------------------------------
def _env(**kw):
    env = PointNavEnv(seed=0, **kw)
    env.reset(obstacles=[[0.5, 0.5, 0.7, 0.7]], start=[0.3, 0.0])
    return env


def test_pointnav_goal_entry():
    env = _env()
    env.reset(obstacles=[[0.5, 0.5, 0.7, 0.7]], start=[0.12, 0.0])
    _, r, kind = env.step(np.array([-1.0, 0.0]))
    assert (r, kind) == (40.0, DoneKind.GOAL)


def test_pointnav_obstacle_is_constraint_terminal():
    env = _env()
    env.reset(obstacles=[[0.5, 0.5, 0.7, 0.7]], start=[0.48, 0.6])
    _, r, kind = env.step(np.array([1.0, 0.0]))
    assert (r, kind) == (-20.0, DoneKind.CONSTRAINT)
    with pytest.raises(TerminalStepError):
        env.step(np.zeros(2))


def test_pointnav_boundary_exit_and_zero_action():
    env = _env()
    env.reset(obstacles=[[0.5, 0.5, 0.7, 0.7]], start=[0.98, 0.0])
    _, _, kind = env.step(np.array([1.0, 0.0]))
    assert kind is DoneKind.CONSTRAINT
    env = _env()
    _, r, kind = env.step(np.zeros(2))
    assert (r, kind) == (-0.1, DoneKind.NONE)


def test_pointnav_dense_reward_and_floor():
    env = _env(reward_mode="dense")
    _, r, _ = env.step(np.zeros(2))
    assert r == pytest.approx(-0.1 * 0.3, abs=1e-12)
    assert env.reward_floor == pytest.approx(-0.1 * np.sqrt(2))
    with pytest.raises(ValueError):
        PointNavEnv(reward_mode="shaped")


def test_pointnav_action_is_clamped():
    env = _env()
    env.step(np.array([5.0, -5.0]))
    np.testing.assert_allclose(env.pos, [0.35, -0.05])


def test_pointnav_episodes_respect_horizon_and_start_rules():
    env = PointNavEnv(n_obstacles=3, horizon=50, seed=1)
    rng = np.random.default_rng(2)
    for _ in range(30):
        env.reset()
        assert np.linalg.norm(env.pos) >= env.goal_radius
        assert not inside_boxes(env.pos[None], env.obstacles)[0]
        steps = 0
        while True:
            _, r, kind = env.step(rng.uniform(-1, 1, size=2))
            steps += 1
            if kind is DoneKind.CONSTRAINT:
                assert r == -20.0
            if kind is not DoneKind.NONE:
                break
        assert steps <= 50


def test_pointnav_occupancy_matches_geometry():
    env = PointNavEnv(n_obstacles=3, seed=4)
    for _ in range(10):
        obs = env.reset()
        grid = obs[2:]
        assert set(np.unique(grid)) <= {0.0, 1.0}
        centers = env.pos + env._grid_offsets
        geo = inside_boxes(centers, env.obstacles) | np.any(np.abs(centers) > 1.0, axis=1)
        np.testing.assert_array_equal(grid.astype(bool), geo)
        np.testing.assert_array_equal(obs[:2], -env.pos)
    assert env.obs_dim == 123


# -- lqr -------------------------------------------------------------------
def test_lqr_rollout_special_starts():
    env = LqrLandscapeEnv()
    raw, clipped, kind, steps = env.rollout((0.0, 0.05))
    assert (raw, kind, steps) == (40.0, DoneKind.GOAL, 0)
    x0, y0, x1, y1 = DEFAULT_OBSTACLES[0]
    raw, clipped, kind, steps = env.rollout(((x0 + x1) / 2, (y0 + y1) / 2))
    assert kind is DoneKind.CONSTRAINT and clipped == env.reward_floor


def test_lqr_landscape_deterministic_and_consistent():
    env = LqrLandscapeEnv()
    a = lqr_ground_truth(env, 24)
    b = lqr_ground_truth(LqrLandscapeEnv(), 24)
    assert a.ground_truth.tobytes() == b.ground_truth.tobytes()
    assert a.violation.any() and (~a.violation).any()
    np.testing.assert_array_equal(a.ground_truth[a.violation], a.floor)
    np.testing.assert_array_equal(a.ground_truth[~a.violation], a.clipped_return[~a.violation])
    assert np.all(a.raw_return[a.violation] < -10)


def test_lqr_discontinuities_sit_in_obstacle_shadows():
    env = LqrLandscapeEnv()
    land = lqr_ground_truth(env, 32)
    # each violating start lies on a straight ray to the goal that crosses a box
    for (i, j) in zip(*np.nonzero(land.violation)):
        p = np.array([land.xs[j], land.ys[i]])
        ts = np.linspace(0, 1, 400)[:, None]
        ray = p * (1 - ts)
        assert inside_boxes(ray, env.obstacles).any() or np.any(np.abs(p) > 1)
    disc = discontinuity_mask(land)
    near = boundary_mask(land, env.obstacles, cells=2)
    assert disc.sum() > 0 and near.sum() > 0


def test_lqr_obstacle_free_has_no_violations():
    land = lqr_ground_truth(LqrLandscapeEnv(obstacles=np.zeros((0, 4))), 16)
    assert not land.violation.any()
