# tests/test_dynamics.py
"""
Exact softmax dynamics on matrix games.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hopeful_agents.approx import softmax
from hopeful_agents.dynamics import (
    DynamicsConfig, DynamicsState, expected_q, max_payoff_q, optimistic_expected_q,
    run_dynamics, softmax_step, trajectory_frame, uniform_state,
)
from hopeful_agents.envs import CLIMBING_PAYOFF

CLIMB = np.asarray(CLIMBING_PAYOFF)
UNIFORM = np.full(3, 1 / 3)
V_UNIFORM = -31 / 9


# ---------------------------------------------------------------------------
#  value rules: (name, payoff, other marginal, expected Q)
# ---------------------------------------------------------------------------
EXPECTED_Q_CASES = [
    ("climbing_uniform", CLIMB, UNIFORM, [-19 / 3, -17 / 3, 5 / 3]),
    ("point_mass", CLIMB, [1.0, 0.0, 0.0], [11.0, -30.0, 0.0]),
    ("constant_game", np.full((3, 3), 4.0), [0.2, 0.3, 0.5], [4.0, 4.0, 4.0]),
]


@pytest.mark.parametrize("name,payoff,other,expected", EXPECTED_Q_CASES,
                         ids=[c[0] for c in EXPECTED_Q_CASES])
def test_expected_q(name, payoff, other, expected):
    assert expected_q(payoff, other) == pytest.approx(expected)


def test_optimistic_rule_on_uniform_climbing():
    q = optimistic_expected_q(CLIMB, UNIFORM, UNIFORM)
    expected = [
        V_UNIFORM + (11 - V_UNIFORM + 0 - V_UNIFORM) / 3,
        V_UNIFORM + (7 - V_UNIFORM + 6 - V_UNIFORM) / 3,
        V_UNIFORM + (-V_UNIFORM - V_UNIFORM + 5 - V_UNIFORM) / 3,
    ]
    assert q == pytest.approx(expected)


def test_optimistic_rule_matches_expected_q_when_nothing_is_clipped():
    payoff = np.array([[10.0, 10.0], [0.0, 0.0]])
    half = np.array([0.5, 0.5])
    assert optimistic_expected_q(payoff, half, half)[0] == pytest.approx(
        expected_q(payoff, half)[0])
    flat = np.full((3, 3), -2.0)
    assert optimistic_expected_q(flat, UNIFORM, UNIFORM) == pytest.approx([-2.0] * 3)


def test_max_payoff_rule_uses_support_only():
    assert max_payoff_q(CLIMB, UNIFORM).tolist() == [11.0, 7.0, 5.0]
    assert max_payoff_q(CLIMB, [0.0, 0.5, 0.5]).tolist() == [0.0, 7.0, 5.0]


@pytest.mark.parametrize("bad", [[0.5, 0.5, 0.5], [1.2, -0.2, 0.0], [[1.0, 0.0, 0.0]]])
def test_non_simplex_marginals_rejected(bad):
    with pytest.raises(ValueError):
        expected_q(CLIMB, bad)
    with pytest.raises(ValueError):
        optimistic_expected_q(CLIMB, bad, UNIFORM)


# ---------------------------------------------------------------------------
#  recurrence
# ---------------------------------------------------------------------------
def test_constant_game_stays_uniform():
    nxt = softmax_step(uniform_state(np.ones((3, 3))), np.ones((3, 3)), DynamicsConfig())
    for p in nxt.policies:
        assert p == pytest.approx(UNIFORM)
    assert nxt.step == 1


def test_huge_temperature_is_uniform():
    nxt = softmax_step(uniform_state(CLIMB), CLIMB, DynamicsConfig(temperature=1e6))
    for p in nxt.policies:
        assert np.max(np.abs(p - UNIFORM)) < 1e-4


def test_first_step_on_climbing():
    nxt = softmax_step(uniform_state(CLIMB), CLIMB, DynamicsConfig(temperature=2.0))
    row = softmax(np.array([-19 / 3, -17 / 3, 5 / 3]) / 2.0)
    column = softmax(np.array([-19 / 3, -23 / 3, 11 / 3]) / 2.0)
    assert nxt.policies[0] == pytest.approx(row, abs=1e-12)
    assert nxt.policies[1] == pytest.approx(column, abs=1e-12)
    assert not np.allclose(nxt.policies[0], nxt.policies[1])


def test_agents_update_simultaneously_from_the_same_state():
    payoff = np.array([[3.0, 0.0], [1.0, 2.0]])
    state = DynamicsState((np.array([0.9, 0.1]), np.array([0.2, 0.8])))
    nxt = softmax_step(state, payoff, DynamicsConfig(temperature=1.0))
    assert nxt.policies[0] == pytest.approx(softmax(payoff @ state.policies[1]))
    assert nxt.policies[1] == pytest.approx(softmax(payoff.T @ state.policies[0]))


OUTCOME_CASES = [
    # (config, greedy payoff after 10 steps)
    (DynamicsConfig(temperature=2.0, steps=10, optimistic=False), 7.0),
    (DynamicsConfig(temperature=2.0, steps=10, optimistic=True), 11.0),
]


@pytest.mark.parametrize("cfg,payoff", OUTCOME_CASES)
def test_climbing_outcomes(cfg, payoff):
    states = run_dynamics(CLIMB, cfg)
    assert len(states) == 11
    assert states[-1].greedy_payoff(CLIMB) == payoff


def test_zero_steps_returns_initial_state():
    (only,) = run_dynamics(CLIMB, DynamicsConfig(steps=0))
    assert only.step == 0
    assert all(p == pytest.approx(UNIFORM) for p in only.policies)


def test_dynamics_are_deterministic():
    a = run_dynamics(CLIMB, DynamicsConfig(optimistic=True, rule="clipped_advantage"))
    b = run_dynamics(CLIMB, DynamicsConfig(optimistic=True, rule="clipped_advantage"))
    assert all(np.array_equal(x, y) for s, t in zip(a, b) for x, y in zip(s.policies, t.policies))


@pytest.mark.parametrize("cfg", [DynamicsConfig(), DynamicsConfig(optimistic=True),
                                 DynamicsConfig(optimistic=True, rule="clipped_advantage")])
def test_dominant_joint_action_is_found_by_every_rule(cfg):
    payoff = np.array([[5.0, 3.0], [2.0, 1.0]])
    states = run_dynamics(payoff, cfg)
    assert all(s.greedy_joint() == (0, 0) for s in states[1:])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-50, 50, allow_nan=False)),
       st.booleans(), st.sampled_from(["max_payoff", "clipped_advantage"]))
def test_every_state_is_on_the_simplex(payoff, optimistic, rule):
    cfg = DynamicsConfig(temperature=2.0, steps=5, optimistic=optimistic, rule=rule)
    for s in run_dynamics(payoff, cfg):
        for p in s.policies:
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all(p > 0.0)


def test_trajectory_frame_layout():
    frame = trajectory_frame(run_dynamics(CLIMB, DynamicsConfig(steps=4)))
    assert list(frame.columns) == ["step", "agent", "action", "probability"]
    assert len(frame) == 3 * 2 * 5
    sums = frame.groupby(["step", "agent"])["probability"].sum()
    assert np.allclose(sums, 1.0)


@pytest.mark.parametrize("kwargs", [dict(temperature=0.0), dict(steps=-1), dict(rule="lenient")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        DynamicsConfig(**kwargs)
