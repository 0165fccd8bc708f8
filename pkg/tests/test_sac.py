import numpy as np
import pytest

from safemult.cmdp import Batch
from safemult.critics import q_mult
from safemult.envs import ChainMdp, PointNavEnv
from safemult.numerics import autodiff as ad
from safemult.sac import METRIC_COLUMNS, SAC_VARIANTS, ConfigError, SacAgent, SacConfig, train


def _agent(variant, seed=0, obs_dim=5, act_dim=2, **kw):
    return SacAgent(obs_dim, act_dim, SacConfig(variant=variant, hidden=(16, 16), **kw), seed=seed)


def _batch(rng, n=32, obs_dim=5, act_dim=2):
    d = (rng.random(n) < 0.2).astype(float)
    r_c = d * (rng.random(n) < 0.5)
    return Batch(rng.normal(size=(n, obs_dim)), rng.uniform(-1, 1, size=(n, act_dim)), rng.normal(size=n), r_c,
                 rng.normal(size=(n, obs_dim)), d)


def test_config_validation():
    with pytest.raises(ConfigError):
        SacConfig(variant="mult_fancy")
    with pytest.raises(ConfigError):
        SacConfig(variant="mult_clipped", lambda_max=0.0)
    with pytest.raises(ConfigError):
        SacConfig(lambda_init=-1.0)
    assert SacConfig(variant="base").multiplicative is False
    assert {v for v in SAC_VARIANTS if SacConfig(variant=v).uses_dual} == {"lagrange", "mult_lagrange"}


def _per_sample_grads(agent, s, seed):
    """Oracle: gradients of Q_i and Psi_i for each sample separately."""
    gq, gp, qs, ps = [], [], [], []
    for i in range(len(s)):
        _, parts = agent.actor_objective(s, np.random.default_rng(seed))
        q, psi = parts["q"], parts["psi"]
        params = agent.policy.params
        gq.append(ad.grad(lambda: ad.index(agent.actor_objective(s, np.random.default_rng(seed))[1]["q"], i), params))
        gp.append(ad.grad(lambda: ad.index(agent.actor_objective(s, np.random.default_rng(seed))[1]["psi"], i), params))
        qs.append(q.data[i])
        ps.append(psi.data[i])
    return gq, gp, np.array(qs), np.array(ps)


def test_q_mult_gradient_decomposition(rng):
    agent = _agent("mult")
    s = rng.normal(size=(6, 5))
    gq, gp, q, psi = _per_sample_grads(agent, s, 7)
    floor = float(q.min()) - 1.0
    params = agent.policy.params

    def composite():
        _, parts = agent.actor_objective(s, np.random.default_rng(7))
        return ad.mean(q_mult(parts["q"], floor, parts["psi"]))

    got = ad.grad(composite, params)
    n = len(s)
    for k in range(len(params)):
        ref = sum((1 - psi[i]) * gq[i][k] - (q[i] - floor) * gp[i][k] for i in range(n)) / n
        np.testing.assert_allclose(got[k], ref, rtol=1e-10, atol=1e-12)


def test_mult_lagrange_stop_gradient_weight_is_inert(rng):
    agent = _agent("mult_lagrange", lambda_init=2.0)
    s = rng.normal(size=(6, 5))
    gq, gp, q, psi = _per_sample_grads(agent, s, 3)
    params = agent.policy.params

    def weight_only():
        _, parts = agent.actor_objective(s, np.random.default_rng(3))
        return ad.mean(ad.stop_gradient(1.0 - parts["psi"]))

    for g in ad.grad(weight_only, params):
        assert np.all(g == 0.0)
    obj_grads = ad.grad(lambda: ad.mean(agent.actor_objective(s, np.random.default_rng(3))[0]), params)
    ent = ad.grad(lambda: ad.mean(agent.config.alpha_ent * agent.actor_objective(s, np.random.default_rng(3))[1]["logp"]),
                  params)
    n = len(s)
    for k in range(len(params)):
        ref = sum((1 - psi[i]) * gq[i][k] - 2.0 * gp[i][k] for i in range(n)) / n - ent[k]
        np.testing.assert_allclose(obj_grads[k], ref, rtol=1e-10, atol=1e-12)


def test_mult_clipped_weight_is_capped(rng):
    agent = _agent("mult_clipped", lambda_max=0.5)
    s = rng.normal(size=(4, 5))
    obj, parts = agent.actor_objective(s, np.random.default_rng(0))
    q, psi, logp = parts["q"].data, parts["psi"].data, parts["logp"].data
    floor = agent.q_min.value
    ref = (1 - psi) * q - np.minimum(q - floor, 0.5) * psi - agent.config.alpha_ent * logp
    np.testing.assert_allclose(obj.data, ref, rtol=1e-12)


@pytest.mark.parametrize("variant", ["base", "lagrange"])
def test_baseline_actor_ignores_safety_unless_lagrange(variant, rng):
    agent = _agent(variant, lambda_init=3.0)
    s = rng.normal(size=(4, 5))
    obj, parts = agent.actor_objective(s, np.random.default_rng(0))
    ref = parts["q"].data - agent.config.alpha_ent * parts["logp"].data
    if variant == "lagrange":
        ref = ref - 3.0 * parts["psi"].data
    np.testing.assert_allclose(obj.data, ref, rtol=1e-12)
    if variant == "base":
        grads = ad.grad(lambda: ad.mean(agent.actor_objective(s, np.random.default_rng(0))[0]), agent.psi[0].params)
        assert all(np.all(g == 0) for g in grads)


def test_updates_run_and_lambda_follows_dual_rule(rng):
    agent = _agent("mult_lagrange", lambda_init=1.0, alpha_dual=0.1)
    batch = _batch(rng)
    before_targ = agent.q_targ[0].get_flat().copy()
    ql, pl = agent.critic_update(batch)
    assert np.isfinite(ql) and np.isfinite(pl)
    lam0 = agent.lam.value
    agent.actor_update(batch)
    assert agent.lam.value >= lam0  # mean psi > c_max = 0
    agent.target_update()
    after = agent.q_targ[0].get_flat()
    online = agent.q[0].get_flat()
    np.testing.assert_allclose(after, 0.995 * before_targ + 0.005 * online, rtol=1e-12, atol=1e-15)


def test_non_finite_loss_reports_batch(rng):
    agent = _agent("mult")
    batch = _batch(rng)
    batch.r[0] = np.inf
    with pytest.raises(FloatingPointError, match="batch r range"):
        agent.critic_update(batch)


def test_train_zero_budget_and_rows():
    env = ChainMdp(n=5, horizon=20, seed=0)
    cfg = SacConfig(hidden=(8,), warmup=50, batch_size=16)
    agent, rows = train(cfg, env, 0)
    assert rows == []
    agent, rows = train(cfg, env, 300, seed=1, log_every=100)
    assert [r["step"] for r in rows] == [100, 200, 300]
    assert all(tuple(r) == METRIC_COLUMNS for r in rows)
    assert all(r["lambda"] >= 0 for r in rows)


def test_baselines_learn_from_raw_rewards(monkeypatch):
    seen = {}
    import safemult.sac as sac_mod

    orig = sac_mod.make_transition

    def spy(*args, **kw):
        tr = orig(*args, **kw)
        if tr.r_c == 1.0:
            seen.setdefault(kw["clip"], []).append(tr.r_bar)
        return tr

    monkeypatch.setattr(sac_mod, "make_transition", spy)
    env = PointNavEnv(n_obstacles=3, seed=0)
    for variant in ("base", "mult"):
        train(SacConfig(variant=variant, hidden=(8,), warmup=400), env, 400, seed=0)
    assert set(seen[False]) == {-20.0}
    assert set(seen[True]) == {-0.1}


def test_train_is_deterministic():
    cfg = SacConfig(hidden=(8,), warmup=60, batch_size=16)
    rows = [train(cfg, ChainMdp(n=5, horizon=20), 200, seed=4, log_every=50)[1] for _ in range(2)]
    assert repr(rows[0]) == repr(rows[1])
