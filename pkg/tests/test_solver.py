import json
import os
import subprocess
import sys
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pacc.model import Intention, KinObservation, ModelConfig, PaccModel, PaccState
from pacc.solver import (
    Belief, PlannerConfig, PlanningError, TabularModel, belief_update, intention_posterior, plan,
    run_episode, warm_up,
)

INF = float("inf")
NO_CLOCK = dict(time_budget=1e9)
TOY = np.zeros((1, 1))

# depth-2 toy: root rewards r1, leaf rewards r2[a, b]; costs c1, c2
R1 = [1.0, 0.0, 0.5]
R2 = [[0, 2, 1], [3, 0, 0], [1, 1, 1]]
C1 = [0.0, 1.0, 0.0]
C2 = [[1, 0, 0], [0, 0, 2], [0, 0, 0]]


def peaked(cell=11):
    w = -np.ones(25)
    w[cell] = 1.0
    w[cell + 1] = 0.5
    w[cell - 5] = w[cell + 5] = 0.3
    return w


def exact_depth2(gamma):
    """[DERIVED] enumeration: the best leaf under each root action and the cost along that path."""
    r1, r2, c1, c2 = map(np.asarray, (R1, R2, C1, C2))
    best = np.argmax(r2, axis=1)
    q_r = r1 + gamma * r2[np.arange(3), best]
    q_c = c1 + gamma * c2[np.arange(3), best]
    return q_r, q_c


def test_depth2_backup_matches_enumeration():
    toy = TabularModel.deterministic_tree((R1, R2), (C1, C2))
    cfg = PlannerConfig(n_simulations=10_000, cost_limit=INF, discount=0.9, **NO_CLOCK)
    action, d = plan(TOY, cfg, toy, seed=3)
    q_r, q_c = exact_depth2(0.9)
    np.testing.assert_allclose(d.q_r, q_r, atol=0.05)
    np.testing.assert_allclose(d.q_c, q_c, atol=0.05)
    assert action == 0 and d.n_simulations == 10_000


def test_single_action_model():
    toy = TabularModel.one_step([0.3], [5.0])
    for n in (1, 7, 300):
        assert plan(TOY, PlannerConfig(n_simulations=n, **NO_CLOCK), toy)[0] == 0


def test_unconstrained_one_step_prefers_reward():
    toy = TabularModel.one_step([1.0, 0.0], [0.0, 0.0])
    picks = [plan(TOY, PlannerConfig(n_simulations=200, cost_limit=INF, **NO_CLOCK), toy, seed=s)[0]
             for s in range(100)]
    assert picks.count(0) >= 95


def test_constrained_one_step_picks_feasible():
    toy = TabularModel.one_step([10.0, 1.0], [100.0, 0.0])
    cfg = PlannerConfig(n_simulations=1000, cost_limit=1.0, **NO_CLOCK)
    runs = [plan(TOY, cfg, toy, seed=s) for s in range(100)]
    assert sum(a == 1 for a, _ in runs) >= 95
    for a, d in runs:
        assert d.q_c[a] <= cfg.cost_limit + 0.1
        assert 0.0 <= d.lam <= cfg.lambda_max


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=4), st.floats(0.0, 200.0), st.floats(0.0, 5.0),
       st.integers(1, 400), st.integers(0, 10_000))
def test_lambda_stays_in_bounds(rewards, cost, limit, n, seed):
    costs = [cost] + [0.0] * (len(rewards) - 1)
    toy = TabularModel.one_step(rewards, costs)
    cfg = PlannerConfig(n_simulations=n, cost_limit=limit, lambda_max=3.0, **NO_CLOCK)
    action, d = plan(TOY, cfg, toy, seed=seed)
    assert 0.0 <= d.lam <= 3.0
    assert 0 <= action < len(rewards)
    assert sum(d.counts) == n and d.n_simulations == n


def test_infinite_limit_equals_unconstrained_search():
    costly = TabularModel.deterministic_tree((R1, R2), (C1, C2))
    free = TabularModel.deterministic_tree((R1, R2))
    cfg = PlannerConfig(n_simulations=2000, cost_limit=INF, **NO_CLOCK)
    for seed in range(5):
        a1, d1 = plan(TOY, cfg, costly, seed=seed)
        a2, d2 = plan(TOY, cfg, free, seed=seed)
        assert a1 == a2 and d1.lam == d2.lam == 0.0
        assert d1.counts == d2.counts and d1.q_r == d2.q_r


def test_plan_deterministic():
    m = PaccModel(peaked())
    b = Belief.uniform(m.initial_state(), 60)
    cfg = PlannerConfig(n_simulations=300, **NO_CLOCK)
    a1, d1 = plan(b, cfg, m, seed=4)
    a2, d2 = plan(b, cfg, m, seed=4)
    assert a1 == a2
    assert {k: v for k, v in d1.__dict__.items() if k != "planning_time"} == \
        {k: v for k, v in d2.__dict__.items() if k != "planning_time"}


def test_anytime_single_simulation():
    m = PaccModel(peaked())
    action, d = plan(Belief.uniform(m.initial_state(), 3), PlannerConfig(n_simulations=1, **NO_CLOCK), m)
    assert 0 <= action < m.n_actions and d.n_simulations == 1


def test_plan_errors():
    toy = TabularModel.one_step([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(PlanningError):
        plan(np.zeros((0, 1)), PlannerConfig(), toy)
    with pytest.raises(PlanningError):
        plan(TOY, PlannerConfig(time_budget=0.0), toy)
    with pytest.raises(NotImplementedError):
        PlannerConfig(reuse_tree=True)
    with pytest.raises(ValueError):
        PlannerConfig(discount=1.0)


def test_time_budget_limits_simulations():
    m = PaccModel(peaked())
    warm_up(m)
    b = Belief.uniform(m.initial_state(), 100)
    _, d = plan(b, PlannerConfig(n_simulations=10_000_000, max_depth=30, time_budget=0.05), m)
    assert 1 <= d.n_simulations < 10_000_000
    assert d.planning_time < 0.5


def test_config_round_trip():
    cfg = PlannerConfig(cost_limit=INF, n_simulations=64)
    back = PlannerConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


# -- belief ------------------------------------------------------------------

def observed_after(state, a_ego, a_lead, model):
    nxt = model.transition_with(state, a_ego, a_lead)
    return model.observe(nxt)


def test_bayes_update_oracle():
    # [DERIVED] uniform prior, realized lead accel 0: (0.4, 0.8, 0.2) / 1.4 = (2/7, 4/7, 1/7)
    m = PaccModel(peaked())
    s = m.initial_state()
    n = 70_000
    post = belief_update(Belief.uniform(s, n), 1, observed_after(s, 1, 0.0, m), m,
                         np.random.default_rng(0))
    p = np.array([2, 4, 1]) / 7
    freq = intention_posterior(post)
    assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n))
    obs = observed_after(s, 1, 0.0, m)
    assert np.all(post.particles[:, :4] == np.array(obs))


def test_absorbing_support_and_determinism():
    m = PaccModel(peaked())
    s = m.initial_state(Intention.NORMAL)
    b = Belief(np.tile(s.as_array(), (50, 1)))
    for a_lead in (-0.5, 0.0, 0.5):
        out = belief_update(b, 2, observed_after(s, 2, a_lead, m), m, np.random.default_rng(1))
        assert np.all(out.intentions == Intention.NORMAL)
    u = Belief.uniform(s, 99)
    obs = observed_after(s, 0, 0.5, m)
    x = belief_update(u, 0, obs, m, np.random.default_rng(7))
    y = belief_update(u, 0, obs, m, np.random.default_rng(7))
    np.testing.assert_array_equal(x.particles, y.particles)


def test_impossible_observation_snaps_with_warning():
    m = PaccModel(peaked())
    s = m.initial_state()
    obs = KinObservation(30.0, 30.0, 30.3, 70.15)
    with pytest.warns(RuntimeWarning):
        out = belief_update(Belief.uniform(s, 30), 1, obs, m, np.random.default_rng(0))
    assert len(out) == 30


def test_zero_likelihood_reinvigorates():
    cfg = ModelConfig(intention_table=[[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.0, 0.5]])
    m = PaccModel(peaked(), cfg)
    s = m.initial_state(Intention.HESITATING)
    b = Belief(np.tile(s.as_array(), (300, 1)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = belief_update(b, 1, observed_after(s, 1, 0.5, m), m, np.random.default_rng(0))
    assert set(out.intentions) == {0, 1, 2}


# -- episodes ----------------------------------------------------------------

def test_episode_horizon_single_action():
    m = PaccModel(peaked(), ModelConfig(ego_accels=[0.0]))
    ep = run_episode(m, PlannerConfig(n_simulations=20, n_particles=10, **NO_CLOCK), seed=0, horizon=3)
    assert len(ep.steps) == 3 and all(s.action == 0 for s in ep.steps)
    assert [s.t for s in ep.steps] == [0, 1, 2]


def test_episode_deterministic():
    m = PaccModel(peaked())
    cfg = PlannerConfig(n_simulations=100, n_particles=50, **NO_CLOCK)
    a = run_episode(m, cfg, seed=5, horizon=25)
    b = run_episode(m, cfg, seed=5, horizon=25)
    assert [s.action for s in a.steps] == [s.action for s in b.steps]
    assert [s.state for s in a.steps] == [s.state for s in b.steps]
    assert a.cumulative_reward == b.cumulative_reward


@pytest.mark.slow
def test_episodes_safe_and_within_budget():
    m = PaccModel(peaked())
    warm_up(m)
    cfg = PlannerConfig()
    steps = low = 0
    worst = 0.0
    for seed in range(30):
        ep = run_episode(m, cfg, seed=seed)
        steps += len(ep.steps)
        low += sum(s.observation.y_lead - s.observation.y_ego < 2.0 for s in ep.steps)
        worst = max(worst, max(s.planning_time for s in ep.steps))
    assert low / steps <= 0.05
    assert worst < 1.0


_BACKEND_SCRIPT = """
import json, numpy as np
from pacc._accel import USE_NUMBA
from pacc.model import PaccModel
from pacc.solver import Belief, PlannerConfig, TabularModel, plan, run_episode
w = -np.ones(25); w[11] = 1.0; w[12] = 0.5
m = PaccModel(w)
_, d = plan(Belief.uniform(m.initial_state(), 30), PlannerConfig(n_simulations=200, time_budget=1e9), m, seed=2)
toy = TabularModel.one_step([10.0, 1.0], [100.0, 0.0])
_, t = plan(np.zeros((1, 1)), PlannerConfig(n_simulations=300, cost_limit=1.0, time_budget=1e9), toy, seed=1)
ep = run_episode(m, PlannerConfig(n_simulations=50, n_particles=20, time_budget=1e9), seed=3, horizon=5)
print(json.dumps({"numba": USE_NUMBA, "d": [d.q_r, d.q_c, d.counts, d.lam],
                  "t": [t.q_r, t.q_c, t.counts, t.lam], "ep": [s.action for s in ep.steps]}))
"""


def _run_backend(disable: bool) -> dict:
    env = dict(os.environ)
    env.pop("PACC_DISABLE_NUMBA", None)
    if disable:
        env["PACC_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _BACKEND_SCRIPT], env=env, capture_output=True,
                         text=True, check=True, timeout=600)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_numba_and_numpy_backends_agree():
    fast, slow = _run_backend(False), _run_backend(True)
    assert fast.pop("numba") is True and slow.pop("numba") is False
    assert fast["ep"] == slow["ep"]
    for key in ("d", "t"):
        for x, y in zip(fast[key], slow[key]):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)
