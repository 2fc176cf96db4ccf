# tests/test_advantage.py
"""
TD errors, GAE against brute force, Leaky-ReLU shaping and critic targets.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hopeful_agents.advantage import (
    AdvantageConfig, compute_advantages, gae, scale_advantages, shape_advantages, td_errors,
    value_targets,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def _brute_force_gae(deltas, dones, gamma, lam):
    n = len(deltas)
    out = np.zeros(n)
    for t in range(n):
        acc, disc = 0.0, 1.0
        for k in range(t, n):
            acc += disc * deltas[k]
            if dones[k]:
                break
            disc *= gamma * lam
        out[t] = acc
    return out


# ---------------------------------------------------------------------------
#  (name, rewards, values, bootstrap, dones, gamma, expected deltas)
# ---------------------------------------------------------------------------
TD_CASES = [
    ("terminal_one_step", [1.0], [0.0], 0.0, [1.0], 0.99, [1.0]),
    ("bootstrapped", [0.0], [0.0], 10.0, [0.0], 0.5, [5.0]),
    ("done_masks_bootstrap", [2.0], [1.0], 100.0, [1.0], 0.9, [1.0]),
    ("two_steps", [1.0, 1.0], [0.5, 0.5], 0.0, [0.0, 1.0], 1.0 - 1e-9, [1.0, 0.5]),
]


@pytest.mark.parametrize("name,r,v,boot,d,gamma,expected", TD_CASES,
                         ids=[c[0] for c in TD_CASES])
def test_td_errors(name, r, v, boot, d, gamma, expected):
    assert td_errors(r, v, boot, d, gamma) == pytest.approx(expected)


def test_td_errors_length_mismatch():
    with pytest.raises(ValueError):
        td_errors([1.0, 2.0], [0.0], 0.0, [0.0, 1.0], 0.9)


def test_gae_lambda_zero_is_td_and_one_is_discounted_sum():
    deltas, dones = np.array([1.0, 2.0, 3.0]), np.zeros(3)
    assert gae(deltas, 0.9, 0.0, dones) == pytest.approx(deltas)
    assert gae(deltas, 0.5, 1.0, dones) == pytest.approx([1 + 1 + 0.75, 2 + 1.5, 3.0])


def test_gae_stops_at_episode_boundary():
    adv = gae([1.0, 1.0, 1.0], 0.9, 0.9, [0.0, 1.0, 0.0])
    assert adv[1] == 1.0 and adv[2] == 1.0
    assert adv[0] == pytest.approx(1.0 + 0.81)


def test_gae_matches_brute_force_on_random_sequences():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        deltas = rng.standard_normal(n)
        dones = (rng.random(n) < 0.1).astype(float)
        gamma, lam = rng.uniform(0, 0.999), rng.uniform(0, 1)
        expected = _brute_force_gae(deltas, dones, gamma, lam)
        assert np.max(np.abs(gae(deltas, gamma, lam, dones) - expected)) < 1e-10


def test_gae_batched_rows_are_independent():
    rng = np.random.default_rng(1)
    deltas, dones = rng.standard_normal((4, 12)), (rng.random((4, 12)) < 0.2).astype(float)
    batched = gae(deltas, 0.99, 0.95, dones)
    for i in range(4):
        assert batched[i] == pytest.approx(gae(deltas[i], 0.99, 0.95, dones[i]), abs=1e-12)


# ---------------------------------------------------------------------------
#  shaping: (name, raw, eta, expected)
# ---------------------------------------------------------------------------
SHAPE_CASES = [
    ("clip", [-2.0, 0.0, 3.0], 0.0, [0.0, 0.0, 3.0]),
    ("identity", [-2.0, 0.0, 3.0], 1.0, [-2.0, 0.0, 3.0]),
    ("leaky", [-2.0, 1.0], 0.5, [-1.0, 1.0]),
    ("leaky_small", [-10.0], 0.2, [-2.0]),
]


@pytest.mark.parametrize("name,raw,eta,expected", SHAPE_CASES, ids=[c[0] for c in SHAPE_CASES])
def test_shape_advantages(name, raw, eta, expected):
    assert shape_advantages(raw, eta) == pytest.approx(expected)


@pytest.mark.parametrize("eta", [-0.1, 1.5])
def test_shape_rejects_eta_outside_unit_interval(eta):
    with pytest.raises(ValueError):
        shape_advantages([1.0], eta)


def test_std_only_scaling_never_recentres():
    raw = np.array([1.0, 2.0, 3.0])
    scaled = scale_advantages(raw, "std-only")
    assert scaled == pytest.approx(raw / np.std(raw))
    assert np.all(scaled > 0)
    assert scale_advantages(np.zeros(3), "std-only").tolist() == [0.0, 0.0, 0.0]


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=finite),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_shaping_is_monotone_in_eta_and_keeps_positives(raw, eta_lo, eta_hi):
    eta_lo, eta_hi = sorted((eta_lo, eta_hi))
    lo, hi = shape_advantages(raw, eta_lo), shape_advantages(raw, eta_hi)
    assert np.all(lo >= raw)
    assert np.all(hi <= lo + 1e-12)
    assert np.array_equal(lo[raw >= 0], raw[raw >= 0])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_eta_one_is_bitwise_identity(raw):
    assert np.array_equal(shape_advantages(raw, 1.0), raw)


# ---------------------------------------------------------------------------
#  full pipeline
# ---------------------------------------------------------------------------
def test_value_targets_use_raw_advantages():
    rewards, values = np.array([[-5.0, 1.0]]), np.array([[0.0, 0.0]])
    batch = compute_advantages(rewards, values, np.zeros(1), np.array([[0.0, 1.0]]),
                               AdvantageConfig(gamma=0.0, lam=0.0, eta=0.0))
    assert batch.raw_adv.tolist() == [[-5.0, 1.0]]
    assert batch.shaped_adv.tolist() == [[0.0, 1.0]]
    assert batch.value_targets.tolist() == [[-5.0, 1.0]]
    assert batch.frac_clipped == 0.5
    assert value_targets([1.0], [2.0]).tolist() == [3.0]


def test_unshaped_path_matches_eta_one():
    rng = np.random.default_rng(3)
    r, v = rng.standard_normal((2, 10)), rng.standard_normal((2, 10))
    d, boot = (rng.random((2, 10)) < 0.2).astype(float), rng.standard_normal(2)
    shaped = compute_advantages(r, v, boot, d, AdvantageConfig(eta=1.0))
    plain = compute_advantages(r, v, boot, d, AdvantageConfig(eta=0.0), shape=False)
    assert np.array_equal(shaped.shaped_adv, plain.shaped_adv)
    assert plain.frac_clipped == 0.0


@pytest.mark.parametrize("kwargs", [dict(gamma=1.0), dict(lam=1.2), dict(eta=2.0),
                                    dict(scale_mode="zscore")])
def test_advantage_config_validation(kwargs):
    with pytest.raises(ValueError):
        AdvantageConfig(**kwargs)
