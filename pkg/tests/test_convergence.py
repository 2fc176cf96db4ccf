# tests/test_convergence.py
"""
Long-budget convergence checks.  Deselected by default; run with

    pytest -m slow tests/test_convergence.py
"""
import numpy as np
import pytest

from hopeful_agents.config import ExperimentConfig
from hopeful_agents.envs import (
    PENALTY_KS, PushBox, PushBoxConfig, QuadraticsConfig, brute_force_optimum,
    climbing_spec, penalty_spec,
)
from hopeful_agents.experiments import run
from hopeful_agents.hysteretic import HystQConfig
from hopeful_agents.learners import default_ppo_config

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2, 3, 4)


def _greedy_returns(tmp_path, name, algorithm="optimappo", env_kind="matrix",
                    env_spec=None, learner=None, iterations=1000):
    cfg = ExperimentConfig(
        algorithm=algorithm, env_kind=env_kind, env_spec=env_spec or climbing_spec(),
        learner=learner or default_ppo_config(env_kind), seeds=SEEDS, iterations=iterations,
        eval_every=iterations, output_dir=tmp_path / name, workers=len(SEEDS),
    )
    summary = run(cfg)
    assert not summary.failed
    return summary


def _count(summary, predicate):
    return sum(bool(predicate(s)) for s in summary.seeds)


# ---------------------------------------------------------------------------
#  matrix games
# ---------------------------------------------------------------------------
def test_climbing_optimistic_versus_plain(tmp_path):
    hopeful = _greedy_returns(tmp_path, "eta0", learner=default_ppo_config("matrix", eta=0.0))
    plain = _greedy_returns(tmp_path, "eta1", learner=default_ppo_config("matrix", eta=1.0))
    assert _count(hopeful, lambda s: s.greedy_return == 275.0) >= 4
    assert _count(plain, lambda s: s.greedy_return in (175.0, 150.0)) >= 4


@pytest.mark.parametrize("k", PENALTY_KS)
def test_penalty_sweep(tmp_path, k):
    spec = penalty_spec(k)
    hopeful = _greedy_returns(tmp_path, "eta0", env_spec=spec,
                              learner=default_ppo_config("matrix", eta=0.0))
    plain = _greedy_returns(tmp_path, "eta1", env_spec=spec,
                            learner=default_ppo_config("matrix", eta=1.0))
    assert _count(hopeful, lambda s: s.greedy_return == 250.0) >= 4
    expected_plain = 250.0 if k == 0 else 50.0
    assert _count(plain, lambda s: s.greedy_return == expected_plain) >= 4


def test_a2c_variant_on_climbing(tmp_path):
    hopeful = _greedy_returns(tmp_path, "a2c0", algorithm="optimaa2c", iterations=3000,
                              learner=default_ppo_config("matrix", eta=0.0, policy_lr=1e-3))
    plain = _greedy_returns(tmp_path, "a2c1", algorithm="optimaa2c", iterations=3000,
                            learner=default_ppo_config("matrix", eta=1.0, policy_lr=1e-3))
    assert _count(hopeful, lambda s: s.greedy_return == 275.0) >= 3
    assert _count(plain, lambda s: s.greedy_return == 275.0) < 3


def test_optimism_trend(tmp_path):
    majority = []
    for eta in (1.0, 0.8, 0.5, 0.2, 0.0):
        summary = _greedy_returns(tmp_path, f"eta_{eta:g}",
                                  learner=default_ppo_config("matrix", eta=eta))
        payoffs = [s.per_step_payoff for s in summary.seeds]
        values, counts = np.unique(payoffs, return_counts=True)
        majority.append(values[np.argmax(counts)])
    assert all(b >= a for a, b in zip(majority, majority[1:]))


def test_hysteretic_baseline(tmp_path):
    hopeful = _greedy_returns(tmp_path, "hq001", algorithm="hysteretic_q",
                              learner=HystQConfig(alpha_neg_ratio=0.01), iterations=20_000)
    plain = _greedy_returns(tmp_path, "hq1", algorithm="hysteretic_q",
                            learner=HystQConfig(alpha_neg_ratio=1.0), iterations=20_000)
    assert _count(hopeful, lambda s: s.success) >= 4
    assert _count(plain, lambda s: not s.success) >= 4
    for a, b in zip(hopeful.seeds, plain.seeds):
        assert a.final_mean_q > b.final_mean_q


# ---------------------------------------------------------------------------
#  push-box and quadratics
# ---------------------------------------------------------------------------
def test_pushbox(tmp_path):
    spec = PushBoxConfig()
    assert brute_force_optimum(PushBox(spec)) == pytest.approx(1.6, abs=1e-12)
    hopeful = _greedy_returns(tmp_path, "pb0", env_kind="pushbox", env_spec=spec,
                              iterations=1500, learner=default_ppo_config("pushbox", eta=0.0))
    plain = _greedy_returns(tmp_path, "pb1", env_kind="pushbox", env_spec=spec,
                            iterations=1500, learner=default_ppo_config("pushbox", eta=1.0))
    assert _count(hopeful, lambda s: abs(s.greedy_return - 1.6) <= 1e-6) >= 3
    assert _count(plain, lambda s: abs(s.greedy_return) <= 0.1) >= 3


def test_quadratics(tmp_path):
    spec = QuadraticsConfig()
    hopeful = _greedy_returns(tmp_path, "q0", env_kind="quadratics", env_spec=spec,
                              iterations=600,
                              learner=default_ppo_config("quadratics", eta=0.0, log_std_init=1.0))
    plain = _greedy_returns(tmp_path, "q1", env_kind="quadratics", env_spec=spec,
                            iterations=600,
                            learner=default_ppo_config("quadratics", eta=1.0, log_std_init=1.0))
    local_peak = spec.peak_values[1 - spec.global_index] * spec.episode_length
    assert _count(hopeful, lambda s: s.success) >= 3
    assert _count(plain, lambda s: abs(s.greedy_return - local_peak) <= 0.1) >= 3
