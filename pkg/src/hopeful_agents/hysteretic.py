"""
hysteretic.py
=============
Independent tabular Q-learners with hysteresis: TD errors that lower a value
are applied with the smaller rate ``alpha_pos * alpha_neg_ratio``.

``alpha_neg_ratio = 1`` is plain independent Q-learning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from hopeful_agents.envs import Environment

logger = logging.getLogger(__name__)

QTable = np.ndarray          # (n_states, n_actions), one per agent


@dataclass(frozen=True)
class HystQConfig:
    alpha_pos:       float = 0.1
    alpha_neg_ratio: float = 0.01
    gamma:           float = 0.9
    eps_start:       float = 1.0
    eps_end:         float = 0.05
    eps_decay_steps: int = 250_000
    episodes:        int = 20_000
    seed:            int = 0
    eval_every:      int = 500

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.alpha_pos <= 1.0:
            raise ValueError(f"alpha_pos must lie in (0, 1], got {self.alpha_pos}")
        if not 0.0 < self.alpha_neg_ratio <= 1.0:
            raise ValueError(f"alpha_neg_ratio must lie in (0, 1], got {self.alpha_neg_ratio}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.eps_decay_steps < 0 or self.episodes < 1 or self.eval_every < 1:
            raise ValueError("eps_decay_steps >= 0, episodes >= 1 and eval_every >= 1 required")

    def epsilon(self, step: int) -> float:
        """Linear decay from eps_start to eps_end over eps_decay_steps env steps."""
        if self.eps_decay_steps == 0 or step >= self.eps_decay_steps:
            return self.eps_end
        frac = step / self.eps_decay_steps
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass(frozen=True)
class TabularTransition:
    state:        int
    joint_action: tuple[int, ...]
    reward:       float
    next_state:   int
    done:         bool


def _check_index(q: QTable, state: int, action: int | None = None) -> None:
    if not 0 <= state < q.shape[0]:
        raise IndexError(f"state {state} outside [0, {q.shape[0]})")
    if action is not None and not 0 <= action < q.shape[1]:
        raise IndexError(f"action {action} outside [0, {q.shape[1]})")


def _td_update(q: QTable, tr: TabularTransition, action: int, cfg: HystQConfig) -> float:
    """In-place hysteretic update of one agent's table; returns the TD error."""
    bootstrap = 0.0 if tr.done else cfg.gamma * float(np.max(q[tr.next_state]))
    td = tr.reward + bootstrap - q[tr.state, action]
    rate = cfg.alpha_pos if td >= 0.0 else cfg.alpha_pos * cfg.alpha_neg_ratio
    q[tr.state, action] += rate * td
    return td


def hq_update(qtables: list[QTable], tr: TabularTransition, cfg: HystQConfig) -> list[QTable]:
    """
    Each agent updates its own table from its own action and the shared
    reward.  Returns new tables; the inputs are left untouched.
    """
    if len(tr.joint_action) != len(qtables):
        raise ValueError(f"{len(tr.joint_action)} actions for {len(qtables)} agents")
    out = []
    for q, a in zip(qtables, tr.joint_action):
        _check_index(q, tr.state, a)
        _check_index(q, tr.next_state)
        q = np.array(q, dtype=float)
        _td_update(q, tr, a, cfg)
        out.append(q)
    return out


def eps_greedy(qtable: QTable, state: int, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform with probability ``epsilon``, else argmax with ties to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    _check_index(qtable, state)
    if rng.random() < epsilon:
        return int(rng.integers(qtable.shape[1]))
    return int(np.argmax(qtable[state]))


def greedy_episode(env: Environment, qtables: list[QTable]):
    """Plays one greedy episode; returns (episode return, last joint action)."""
    env.reset()
    total, joint = 0.0, None
    while True:
        s = env.state_index()
        joint = [int(np.argmax(q[s])) for q in qtables]
        tr = env.step(joint)
        total += tr.reward
        if tr.done:
            return total, joint


def hq_train(env: Environment, cfg: HystQConfig) -> tuple[list[QTable], pd.DataFrame]:
    """
    ε-greedy training with per-step hysteretic updates.

    The curve has one row per evaluation point with the greedy return and
    the mean / max Q-value over every table entry.
    """
    if not env.discrete:
        raise ValueError(f"hysteretic Q-learning needs discrete actions; "
                         f"{type(env).__name__} is continuous")
    tables = [np.zeros((env.n_states, env.n_actions)) for _ in range(env.n_agents)]
    rng = np.random.default_rng(cfg.seed)
    steps, rows = 0, []
    for episode in range(1, cfg.episodes + 1):
        env.reset()
        state = env.state_index()
        while True:
            eps = cfg.epsilon(steps)
            joint = tuple(eps_greedy(q, state, eps, rng) for q in tables)
            step = env.step(list(joint))
            next_state = env.state_index()
            tr = TabularTransition(state, joint, step.reward, next_state, step.done)
            for q, a in zip(tables, joint):
                _td_update(q, tr, a, cfg)
            steps += 1
            state = next_state
            if step.done:
                break

        if episode % cfg.eval_every == 0 or episode == cfg.episodes:
            greedy_return, greedy_joint = greedy_episode(env, tables)
            everything = np.concatenate([q.ravel() for q in tables])
            row = {
                "iteration":   episode,
                "env_steps":   steps,
                "mean_return": greedy_return,
                "max_return":  greedy_return,
                "epsilon":     eps,
                "mean_q":      float(everything.mean()),
                "max_q":       float(everything.max()),
            }
            row |= {f"greedy_action_agent_{k}": a for k, a in enumerate(greedy_joint)}
            rows.append(row)
            logger.info("episode %d: greedy return %.4g, mean Q %.4g, eps %.3f",
                        episode, greedy_return, row["mean_q"], eps)
    return tables, pd.DataFrame(rows)


def format_qtables(qtables: list[QTable]) -> str:
    """Plain-text grids, one block per agent."""
    blocks = []
    for k, q in enumerate(qtables):
        lines = [f"# agent {k}: {q.shape[0]} states x {q.shape[1]} actions"]
        lines += [" ".join(f"{v: .6g}" for v in row) for row in q]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def dump_qtables(qtables: list[QTable], path: str | Path) -> None:
    Path(path).write_text(format_qtables(qtables), encoding="utf-8")
