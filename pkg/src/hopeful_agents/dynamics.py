"""
dynamics.py
===========
Exact, sample-free softmax policy iteration on 2-player matrix games.

Each step both agents compute per-action values against the other agent's
current marginal and jump to ``softmax(Q / temperature)`` simultaneously.

Value rules
-----------
* ``expected_q``             – payoff row averaged over the other marginal
* ``optimistic_expected_q``  – baseline plus clip-at-zero advantages
* ``max_payoff_q``           – best payoff over the other agent's support
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from hopeful_agents.approx import softmax

OPTIMISTIC_RULES = ("max_payoff", "clipped_advantage")
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class DynamicsConfig:
    temperature: float = 2.0
    steps:       int = 10
    optimistic:  bool = False
    rule:        str = "max_payoff"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.rule not in OPTIMISTIC_RULES:
            raise ValueError(f"rule must be one of {OPTIMISTIC_RULES}, got {self.rule!r}")


@dataclass(frozen=True)
class DynamicsState:
    policies: tuple[np.ndarray, ...]
    step:     int = 0

    def greedy_joint(self) -> tuple[int, ...]:
        return tuple(int(np.argmax(p)) for p in self.policies)

    def greedy_payoff(self, payoff) -> float:
        return float(np.asarray(payoff, dtype=float)[self.greedy_joint()])


def check_simplex(p, name: str = "distribution") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < -SIMPLEX_TOL) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name} is not on the probability simplex: {p}")
    return p


def expected_q(payoff, other) -> np.ndarray:
    """``Q_i = sum_j other(j) * R(i, j)``; rows of ``payoff`` are own actions."""
    R = np.asarray(payoff, dtype=float)
    return R @ check_simplex(other, "other-agent marginal")


def optimistic_expected_q(payoff, own, other) -> np.ndarray:
    R = np.asarray(payoff, dtype=float)
    own = check_simplex(own, "own marginal")
    other = check_simplex(other, "other-agent marginal")
    baseline = float(own @ R @ other)
    return baseline + np.maximum(R - baseline, 0.0) @ other


def max_payoff_q(payoff, other) -> np.ndarray:
    R = np.asarray(payoff, dtype=float)
    support = check_simplex(other, "other-agent marginal") > 0.0
    return R[:, support].max(axis=1)


def _agent_values(R: np.ndarray, own, other, cfg: DynamicsConfig) -> np.ndarray:
    if not cfg.optimistic:
        return expected_q(R, other)
    if cfg.rule == "max_payoff":
        return max_payoff_q(R, other)
    return optimistic_expected_q(R, own, other)


def uniform_state(payoff) -> DynamicsState:
    n_rows, n_cols = np.asarray(payoff).shape
    return DynamicsState((np.full(n_rows, 1.0 / n_rows), np.full(n_cols, 1.0 / n_cols)))


def softmax_step(state: DynamicsState, payoff, cfg: DynamicsConfig) -> DynamicsState:
    R = np.asarray(payoff, dtype=float)
    p0, p1 = state.policies
    # agent 1 sees the game from the column side
    q0 = _agent_values(R, p0, p1, cfg)
    q1 = _agent_values(R.T, p1, p0, cfg)
    return DynamicsState((softmax(q0 / cfg.temperature), softmax(q1 / cfg.temperature)),
                         state.step + 1)


def run_dynamics(payoff, cfg: DynamicsConfig) -> list[DynamicsState]:
    states = [uniform_state(payoff)]
    for _ in range(cfg.steps):
        states.append(softmax_step(states[-1], payoff, cfg))
    return states


def trajectory_frame(states: list[DynamicsState]) -> pd.DataFrame:
    rows = [
        {"step": s.step, "agent": k, "action": a, "probability": float(pr)}
        for s in states
        for k, p in enumerate(s.policies)
        for a, pr in enumerate(p)
    ]
    return pd.DataFrame(rows, columns=["step", "agent", "action", "probability"])
