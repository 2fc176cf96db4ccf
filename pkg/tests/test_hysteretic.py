# tests/test_hysteretic.py
"""
Hysteretic Q-learning: the asymmetric update, ε-greedy control and the
optimism trend on the climbing game.
"""
import numpy as np
import pytest

from hopeful_agents.envs import MatrixGame, Quadratics, QuadraticsConfig, climbing_spec
from hopeful_agents.hysteretic import (
    HystQConfig, TabularTransition, eps_greedy, format_qtables, hq_train, hq_update,
)


def _tables(row):
    return [np.array([row], dtype=float), np.array([row], dtype=float)]


# ---------------------------------------------------------------------------
#  (name, Q row, reward, done, alpha_neg_ratio, expected Q(s, 0))
# ---------------------------------------------------------------------------
UPDATE_CASES = [
    ("positive_td", [1.0, 0.0, 0.0], 2.0, False, 0.1, 1.19),
    ("negative_td_damped", [1.0, 0.0, 0.0], 0.5, True, 0.1, 0.995),
    ("negative_td_plain", [1.0, 0.0, 0.0], 0.5, True, 1.0, 0.95),
    ("zero_td_counts_as_positive", [1.0, 0.0, 0.0], 1.0, True, 0.01, 1.0),
]


@pytest.mark.parametrize("name,row,reward,done,ratio,expected", UPDATE_CASES,
                         ids=[c[0] for c in UPDATE_CASES])
def test_hq_update(name, row, reward, done, ratio, expected):
    cfg = HystQConfig(alpha_pos=0.1, alpha_neg_ratio=ratio, gamma=0.9)
    before = _tables(row)
    after = hq_update(before, TabularTransition(0, (0, 0), reward, 0, done), cfg)
    assert after[0][0, 0] == pytest.approx(expected)
    assert after[1][0, 0] == pytest.approx(expected)
    assert before[0][0, 0] == 1.0                      # inputs untouched


def test_each_agent_updates_its_own_action():
    cfg = HystQConfig(alpha_pos=0.5, gamma=0.0)
    after = hq_update(_tables([0.0, 0.0, 0.0]), TabularTransition(0, (2, 1), 4.0, 0, True), cfg)
    assert after[0].tolist() == [[0.0, 0.0, 2.0]]
    assert after[1].tolist() == [[0.0, 2.0, 0.0]]


def test_ratio_one_is_standard_q_learning():
    rng = np.random.default_rng(0)
    cfg = HystQConfig(alpha_pos=0.3, alpha_neg_ratio=1.0, gamma=0.9)
    tables = _tables([0.0, 0.0, 0.0])
    ref = [t.copy() for t in tables]
    for _ in range(200):
        tr = TabularTransition(0, tuple(int(a) for a in rng.integers(0, 3, 2)),
                               float(rng.normal()), 0, bool(rng.random() < 0.2))
        tables = hq_update(tables, tr, cfg)
        for q, a in zip(ref, tr.joint_action):
            target = tr.reward + (0.0 if tr.done else 0.9 * q[0].max())
            q[0, a] = q[0, a] + 0.3 * (target - q[0, a])
    assert all(np.array_equal(a, b) for a, b in zip(tables, ref))


def test_update_rejects_bad_indices():
    cfg = HystQConfig()
    with pytest.raises(IndexError):
        hq_update(_tables([0.0, 0.0, 0.0]), TabularTransition(0, (3, 0), 1.0, 0, True), cfg)
    with pytest.raises(IndexError):
        hq_update(_tables([0.0, 0.0, 0.0]), TabularTransition(1, (0, 0), 1.0, 0, True), cfg)


# ---------------------------------------------------------------------------
#  ε-greedy
# ---------------------------------------------------------------------------
def test_greedy_ties_break_to_lowest_index():
    q = np.array([[0.0, 5.0, 5.0]])
    rng = np.random.default_rng(0)
    assert all(eps_greedy(q, 0, 0.0, rng) == 1 for _ in range(50))


def test_epsilon_one_is_uniform():
    q = np.array([[0.0, 5.0, 1.0]])
    rng = np.random.default_rng(0)
    draws = np.array([eps_greedy(q, 0, 1.0, rng) for _ in range(30000)])
    assert np.bincount(draws, minlength=3) / 30000 == pytest.approx([1 / 3] * 3, abs=0.01)


def test_epsilon_schedule_is_linear():
    cfg = HystQConfig(eps_start=1.0, eps_end=0.0, eps_decay_steps=100)
    assert [cfg.epsilon(s) for s in (0, 50, 100, 1000)] == pytest.approx([1.0, 0.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        eps_greedy(np.zeros((1, 3)), 0, 1.5, np.random.default_rng(0))


@pytest.mark.parametrize("kwargs", [dict(alpha_pos=0.0), dict(alpha_pos=1.5),
                                    dict(alpha_neg_ratio=0.0), dict(gamma=1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        HystQConfig(**kwargs)


# ---------------------------------------------------------------------------
#  training
# ---------------------------------------------------------------------------
FAST = dict(episodes=1500, eps_decay_steps=5000, eval_every=250, seed=0)


def _final_mean_q(ratio):
    env = MatrixGame(climbing_spec(episode_length=5))
    _, curve = hq_train(env, HystQConfig(alpha_neg_ratio=ratio, **FAST))
    return curve["mean_q"].iloc[-1]


def test_training_curve_and_bounds():
    env = MatrixGame(climbing_spec(episode_length=5))
    tables, curve = hq_train(env, HystQConfig(**FAST))
    assert list(curve["iteration"]) == [250, 500, 750, 1000, 1250, 1500]
    assert {"mean_return", "mean_q", "max_q", "epsilon", "env_steps"} <= set(curve.columns)
    assert curve["env_steps"].iloc[-1] == 1500 * 5
    for q in tables:
        assert q.shape == (1, 3)
        assert np.all(q <= 11.0 / (1 - 0.9) + 1e-9)
        assert np.all(q >= -30.0 / (1 - 0.9) - 1e-9)
    assert "agent 1" in format_qtables(tables)


def test_lower_ratio_means_more_optimistic_values():
    values = [_final_mean_q(r) for r in (0.01, 0.1, 1.0)]
    assert values[0] >= values[1] >= values[2]
    assert values[0] > values[2]


def test_training_is_reproducible():
    env = MatrixGame(climbing_spec(episode_length=5))
    a, _ = hq_train(env, HystQConfig(**FAST))
    b, _ = hq_train(env, HystQConfig(**FAST))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_continuous_env_rejected():
    with pytest.raises(ValueError):
        hq_train(Quadratics(QuadraticsConfig()), HystQConfig(episodes=1))
