import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safemult.critics import (
    CriticEvals,
    LagrangeMultiplier,
    RunningMin,
    advantage,
    bce,
    dual_ascent,
    gae,
    gae_mult,
    polyak,
    q_mult,
    safety_target,
    v_mult,
)
from safemult.numerics import Mlp, Tensor
from safemult.numerics import autodiff as ad

vals = st.floats(-1e3, 1e3, allow_nan=False)
probs = st.floats(0.0, 1.0)


def test_v_mult_examples():
    assert v_mult(10.0, -5.0, 0.4) == pytest.approx(4.0, abs=1e-12)
    assert v_mult(3.0, -1.0, 1.0) == -1.0
    assert v_mult(3.0, -1.0, 0.0) == 3.0
    assert q_mult(2.0, 0.0, 0.25) == 1.5


def test_v_mult_rejects_bad_probability():
    for phi in (-0.01, 1.01, np.nan):
        with pytest.raises(ValueError):
            v_mult(1.0, 0.0, phi)


def test_v_mult_lowers_running_min_instead_of_failing():
    floor = RunningMin()
    out = v_mult(np.array([-3.0, 2.0]), floor, np.array([0.5, 0.5]))
    assert floor.value == -3.0
    np.testing.assert_allclose(out, [-3.0, -0.5])


@settings(max_examples=2000, deadline=None)
@given(vals, vals, probs, probs)
def test_v_mult_properties(a, b, p1, p2):
    v, vmin = max(a, b), min(a, b)
    out = v_mult(v, vmin, p1)
    assert vmin - 1e-12 <= out <= v + 1e-12
    lo, hi = sorted((p1, p2))
    assert v_mult(v, vmin, hi) <= v_mult(v, vmin, lo) + 1e-12
    assert abs(v_mult(v, vmin, 0.0) - v) <= 1e-12
    assert abs(q_mult(v, vmin, 1.0) - vmin) <= 1e-12


def test_running_min_never_increases():
    m = RunningMin()
    seen = []
    for x in np.random.default_rng(0).normal(size=(50, 4)) * 5:
        seen.append(m.update(x))
    assert all(b <= a for a, b in zip(seen, seen[1:]))
    assert m.value <= 0.0


def test_advantage_examples():
    ev = CriticEvals(v_mult_s=np.array([3.0]), v_mult_next=np.array([4.0]))
    assert advantage("V1", [-0.1], [0.0], [0.0], ev, 0.99)[0] == pytest.approx(0.86, abs=1e-12)
    ev = CriticEvals(v_mult_s=np.array([1.5]), q_bar=np.array([7.0]), q_min=-2.0, phi_next=np.array([0.3]))
    # constraint-terminal step: the safety bracket is zero
    assert advantage("V3", [-0.1], [1.0], [1.0], ev, 0.99, 0.8)[0] == pytest.approx(-2.0 - 1.5, abs=1e-12)
    with pytest.raises(ValueError, match="V4"):
        advantage("V4", [0.0], [0.0], [0.0], ev, 0.99)
    with pytest.raises(ValueError, match="q_mult"):
        advantage("V2", [0.0], [0.0], [0.0], CriticEvals(v_mult_s=np.zeros(1)), 0.99)


def test_v3_bracket_is_clamped():
    ev = CriticEvals(v_mult_s=np.zeros(1), q_bar=np.array([5.0]), q_min=0.0, phi_next=np.array([1.0]))
    # a proper bracket would be 1 - 1.0*0.99 > 0; an overshooting Phi > 1/gamma_c is clamped
    out = advantage("V3", [0.0], [0.0], [0.0], ev, 0.99, gamma_c=1.0)
    assert out[0] == 0.0


def _manual_gae(delta, d, gamma, lam):
    n = len(delta)
    out = np.zeros(n)
    for t in range(n):
        acc, w = 0.0, 1.0
        for k in range(t, n):
            acc += w * delta[k]
            if d[k]:
                break
            w *= gamma * lam
        out[t] = acc
    return out


def test_gae_matches_explicit_sum(rng):
    for _ in range(20):
        n = int(rng.integers(1, 12))
        delta = rng.normal(size=n)
        d = np.zeros(n)
        d[-1] = float(rng.integers(0, 2))
        lam, gamma = rng.uniform(), rng.uniform(0.5, 1.0)
        np.testing.assert_allclose(gae(delta, d, gamma, lam), _manual_gae(delta, d, gamma, lam), rtol=1e-12)


def test_gae_three_step_hand_values():
    out = gae([1.0, 2.0, 3.0], [0, 0, 1], 0.5, 0.5)
    np.testing.assert_allclose(out, [1 + 0.25 * (2 + 0.25 * 3), 2 + 0.25 * 3, 3.0])


def test_gae_lambda_zero_is_one_step():
    r = np.array([0.1, -0.1, 2.0])
    ev = CriticEvals(v_mult_s=np.array([1.0, 2.0, 3.0]), v_mult_next=np.array([2.0, 3.0, 0.5]))
    np.testing.assert_array_equal(gae_mult(r, [0, 0, 1], [0, 0, 0], ev, 0.9, 0.0, "V1"),
                                  advantage("V1", r, [0, 0, 1], [0, 0, 0], ev, 0.9))


def test_safety_target_examples():
    assert safety_target([1.0], [1.0], 0.8, [np.array([0.3]), np.array([0.2])])[0] == 1.0
    assert safety_target([0.0], [1.0], 0.8, [np.array([0.9])])[0] == 0.0
    assert safety_target([0.0], [0.0], 0.8, [np.array([0.5]), np.array([0.1])])[0] == pytest.approx(0.4, abs=1e-15)


def test_safety_target_flags_broken_contract():
    with pytest.raises(ValueError):
        safety_target([1.0], [0.0], 0.8, [np.array([0.9])])
    with pytest.raises(ValueError):
        safety_target([0.0], [0.0], 0.8, [])


def test_bce_examples():
    assert bce(np.array([0.5]), np.array([0.5])) == pytest.approx(np.log(2), abs=1e-12)
    assert bce(np.array([0.9]), np.array([1.0])) == pytest.approx(-np.log(0.9), abs=1e-12)
    assert bce(np.array([1 - 1e-9]), np.array([1.0])) < 1e-8
    t = Tensor(np.array([0.3, 0.8]), requires_grad=True)
    loss = bce(t, np.array([0.0, 1.0]))
    (g,) = ad.backward(loss, [t])
    np.testing.assert_allclose(g, 0.5 * np.array([1 / 0.7, -1 / 0.8]), rtol=1e-12)


def test_dual_ascent_examples():
    lam = LagrangeMultiplier(1.0, 0.1)
    assert dual_ascent(lam, 0.3) == 1.03
    lam = LagrangeMultiplier(0.05, 0.1)
    assert dual_ascent(lam, -10.0) == 0.0
    lam = LagrangeMultiplier(2.5, 0.1)
    assert dual_ascent(lam, 0.0) == 2.5
    with pytest.raises(ValueError):
        LagrangeMultiplier(-1.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 100), st.floats(1e-4, 1.0), st.lists(st.floats(-50, 50), max_size=30))
def test_dual_stays_nonnegative(init, lr, levels):
    lam = LagrangeMultiplier(init, lr)
    for lv in levels:
        before = lam.value
        after = dual_ascent(lam, lv)
        assert after >= 0.0
        if lv <= 0:
            assert after <= before


def test_polyak_examples():
    a = Mlp([2, 3, 1], seed=0)
    b = Mlp([2, 3, 1], seed=1)
    flat = a.get_flat()
    polyak(a, b, 1.0)
    np.testing.assert_array_equal(a.get_flat(), flat)
    polyak(a, b, 0.0)
    np.testing.assert_array_equal(a.get_flat(), b.get_flat())
    t, o = Mlp([1, 1], seed=0), Mlp([1, 1], seed=0)
    t.set_flat(np.zeros(2))
    o.set_flat(np.ones(2))
    polyak(t, o, 0.995)
    np.testing.assert_allclose(t.get_flat(), [0.005, 0.005], rtol=1e-12)
    with pytest.raises(ValueError):
        polyak(Mlp([2, 2], seed=0), Mlp([2, 3], seed=0), 0.5)
