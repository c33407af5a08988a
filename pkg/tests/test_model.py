import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pacc.model import (
    EGO_ACCELS, INTENTION_TABLE, LEAD_ACCELS, Intention, KinObservation, ModelConfig, PaccModel, PaccState,
    pacc_step, peak_state, sample_lead_accel,
)


def peaked(cell=11):
    w = -np.ones(25)
    w[cell] = 1.0
    w[cell + 1] = 0.25
    return w


@pytest.fixture(scope="module")
def model():
    return PaccModel(peaked())


def test_transition_example(model):
    s = PaccState(30.0, 0.0, 30.0, 40.0, Intention.NORMAL)
    nxt = model.transition_with(s, 2, 0.0, 1.0)
    assert (nxt.v_ego, nxt.y_ego, nxt.v_lead, nxt.y_lead) == pytest.approx((30.6, 30.3, 30.0, 70.0))
    assert nxt.intention == Intention.NORMAL
    still = model.transition_with(s, 1, 0.0)
    assert (still.v_ego, still.y_ego, still.y_lead) == pytest.approx((30.0, 30.0, 70.0))


def test_zero_speed_clamp(model):
    s = PaccState(0.3, 0.0, 30.0, 40.0)
    nxt = model.transition_with(s, 0, 0.0, 1.0)
    assert nxt.v_ego == 0.0
    # stops after 0.5 s having covered 0.3 * 0.5 / 2
    assert nxt.y_ego == pytest.approx(0.075)
    # the unclamped formula would reverse back to 0.0; the stopped car ends
    # between that and a coast at the initial speed
    assert 0.3 - 0.5 * 0.6 <= nxt.y_ego <= 0.3


def test_transition_rejects_bad_dt(model):
    with pytest.raises(ValueError):
        model.transition_with(model.initial_state(), 1, 0.0, dt=0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0, 50.0), st.floats(-100, 100), st.floats(1.0, 50.0), st.floats(0.0, 200.0),
       st.sampled_from(range(3)), st.sampled_from(LEAD_ACCELS), st.floats(0.05, 1.0))
def test_kinematics_match_transition_matrix(v, y, vl, gap, action, a_lead, dt):
    # [DERIVED] away from the zero-speed clamp the step is [v', y'] = [[1, 0], [dt, 1]] [v, y] + [dt, dt^2/2] a
    model = PaccModel(peaked())
    s = PaccState(v, y, vl, y + gap, Intention.AGGRESSIVE)
    nxt = model.transition_with(s, action, a_lead, dt)
    a = EGO_ACCELS[action]
    assert nxt.v_ego == pytest.approx(v + a * dt, abs=1e-12)
    assert nxt.y_ego == pytest.approx(y + v * dt + 0.5 * a * dt * dt, abs=1e-9)
    assert nxt.v_lead == pytest.approx(vl + a_lead * dt, abs=1e-12)
    assert nxt.y_lead == pytest.approx(y + gap + vl * dt + 0.5 * a_lead * dt * dt, abs=1e-9)
    assert nxt.intention == s.intention


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 40.0), st.floats(0.0, 100.0), st.sampled_from(range(3)),
       st.sampled_from(range(3)), st.floats(0.0, 0.999999))
def test_kernel_step_agrees_with_transition(v, gap, action, intention, u):
    model = PaccModel(peaked())
    pf, pi = model.packed()
    s = PaccState(v, 5.0, 28.0, 5.0 + gap, Intention(intention))
    out = np.empty(5)
    k, reward, cost, terminal = pacc_step(pf, pi, s.as_array(), action, u, out)
    ref = model.transition_with(s, action, LEAD_ACCELS[k])
    np.testing.assert_allclose(out, ref.as_array(), atol=1e-12)
    assert reward == model.reward_of_state(ref)
    assert cost == model.cost_of_state(ref)
    assert terminal == model.is_terminal(ref, 0)[1]
    cum = np.cumsum(INTENTION_TABLE[intention])
    assert k == int(np.searchsorted(cum, u, side="right"))


@pytest.mark.parametrize("intention", list(Intention))
def test_table_sampling_within_three_sigma(intention):
    n = 100_000
    rng = np.random.default_rng(int(intention))
    draws = np.array([sample_lead_accel(intention, rng) for _ in range(n)])
    model_rng = np.random.default_rng(10 + int(intention))
    model = PaccModel(peaked())
    draws_model = np.array([model.sample_lead_accel(intention, model_rng) for _ in range(n)])
    for sample in (draws, draws_model):
        for a, p in zip(LEAD_ACCELS, INTENTION_TABLE[intention]):
            freq = np.mean(sample == a)
            assert abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_reward_examples(model):
    assert model.reward_of_state(PaccState(30, 0, 30, 30)) == 1.0
    assert model.reward_of_state(PaccState(50, 0, 50, 30)) == -1.0
    assert model.reward_of_state(PaccState(30, 0, 30, 130)) == -1.0
    assert model.reward_of_state(PaccState(30, 0, 30, 50)) == pytest.approx(0.25)
    assert peak_state(model.weights) == 11


def test_weights_are_normalized():
    m = PaccModel(np.arange(25.0))
    assert m.weights.min() == -1 and m.weights.max() == 1
    with pytest.raises(ValueError):
        PaccModel(np.ones(24))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 24), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99),
       st.floats(0.01, 0.99))
def test_reward_piecewise_constant(cell, f1, g1, f2, g2):
    model = PaccModel(np.random.default_rng(cell).normal(size=25))
    i, j = divmod(cell, 5)
    se, de = model.config.speed_edges, model.config.distance_edges

    def point(f, g):
        return PaccState(se[i] + f * (se[i + 1] - se[i]), 0.0, 30.0, de[j] + g * (de[j + 1] - de[j]))

    assert model.reward_of_state(point(f1, g1)) == model.reward_of_state(point(f2, g2)) == model.weights[cell]


def test_cost_examples(model):
    assert model.cost_of_state(PaccState(30, 0, 30, 1.5)) == 10.0
    assert model.cost_of_state(PaccState(30, 0, 30, 2.0)) == 0.0
    assert model.cost_of_state(PaccState(30, 0, 30, 50.0)) == 0.0


@given(st.floats(-10, 200), st.floats(-10, 200))
def test_cost_values_and_monotone(g1, g2):
    m = PaccModel(peaked())
    c1 = m.cost_of_state(PaccState(30, 0, 30, g1))
    c2 = m.cost_of_state(PaccState(30, 0, 30, g2))
    assert {c1, c2} <= {0.0, 10.0}
    if g1 <= g2:
        assert c1 >= c2


def test_is_terminal_examples(model):
    assert model.is_terminal(PaccState(30, 0, 30, 40), 120, 120) == (True, False)
    assert model.is_terminal(PaccState(30, 0, 30, -0.1), 3) == (True, True)
    assert model.is_terminal(PaccState(30, 0, 30, 40), 5) == (False, False)


def test_observe_hides_intention(model):
    a = PaccState(30, 1, 31, 41, Intention.HESITATING)
    b = PaccState(30, 1, 31, 41, Intention.AGGRESSIVE)
    assert model.observe(a) == model.observe(b) == (30, 1, 31, 41)
    assert "intention" not in KinObservation._fields


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(intention_table=[[0.5, 0.5, 0.5]] * 3)
    with pytest.raises(ValueError):
        ModelConfig(discount=1.0)
    cfg = ModelConfig(horizon=50)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
