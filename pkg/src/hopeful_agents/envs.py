"""
envs.py
=======
Fully cooperative environments: every agent sees the full state and all
agents receive one common reward per step.

* ``MatrixGame``   – repeated 2-player matrix games (climbing, penalty-k)
* ``PushBox``      – gridworld where the box only moves on a coordinated push
* ``Quadratics``   – continuous one-shot game with a narrow global peak and a
                     broad local peak

Nothing about learning, files or plotting lives here.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

CONSTANT_OBS_DIM = 4

CLIMBING_PAYOFF = (
    (11.0, -30.0, 0.0),
    (-30.0, 7.0, 6.0),
    (0.0, 0.0, 5.0),
)

PENALTY_KS = (0.0, -25.0, -50.0, -75.0, -100.0)

# push-box action indices
UP, DOWN, LEFT, RIGHT, PUSH = range(5)
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}


def penalty_payoff(k: float) -> tuple[tuple[float, ...], ...]:
    """Penalty game payoff; ``k <= 0`` punishes miscoordinated corners."""
    return (
        (float(k), 0.0, 10.0),
        (0.0, 2.0, 0.0),
        (10.0, 0.0, float(k)),
    )


# ---------- specs -----------------------------------------------------------
@dataclass(frozen=True)
class MatrixGameSpec:
    payoff:         tuple[tuple[float, ...], ...] = CLIMBING_PAYOFF
    episode_length: int = 25
    name:           str = "climbing"

    def __post_init__(self):
        object.__setattr__(self, "payoff",
                           tuple(tuple(float(v) for v in row) for row in self.payoff))
        self.validate()

    def validate(self) -> None:
        arr = np.asarray(self.payoff, dtype=float)
        if arr.shape != (3, 3):
            raise ValueError(f"payoff must be 3x3, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("payoff must be finite everywhere")
        if int(self.episode_length) < 1:
            raise ValueError(f"episode_length must be >= 1, got {self.episode_length}")

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.payoff, dtype=float)


def climbing_spec(episode_length: int = 25) -> MatrixGameSpec:
    return MatrixGameSpec(CLIMBING_PAYOFF, episode_length, "climbing")


def penalty_spec(k: float, episode_length: int = 25) -> MatrixGameSpec:
    return MatrixGameSpec(penalty_payoff(k), episode_length, f"penalty_k{int(k)}")


@dataclass(frozen=True)
class PushBoxConfig:
    grid_width:                 int = 5
    grid_height:                int = 5
    episode_length:             int = 20
    success_reward:             float = 1.6
    uncoordinated_push_penalty: float = -0.5
    goal_row:                   int = 0
    box_start:                  tuple[int, int] = (3, 2)
    agent_starts:               tuple[tuple[int, int], ...] = ((4, 0), (4, 4))

    def __post_init__(self):
        object.__setattr__(self, "box_start", tuple(int(v) for v in self.box_start))
        object.__setattr__(self, "agent_starts",
                           tuple(tuple(int(v) for v in p) for p in self.agent_starts))
        self.validate()

    def validate(self) -> None:
        if self.grid_width < 3 or self.grid_height < 2:
            raise ValueError("grid must be at least 3 wide and 2 high")
        if self.episode_length < 1:
            raise ValueError(f"episode_length must be >= 1, got {self.episode_length}")
        if not self.uncoordinated_push_penalty < 0:
            raise ValueError("uncoordinated_push_penalty must be < 0, "
                             "otherwise there is no miscoordination pressure")
        if not 0 <= self.goal_row < self.grid_height:
            raise ValueError(f"goal_row {self.goal_row} outside the grid")
        box_r, box_c = self.box_start
        if not (self.goal_row < box_r < self.grid_height and 0 < box_c < self.grid_width - 1):
            raise ValueError("box must start below goal_row, away from the side walls")
        if len(self.agent_starts) != 2:
            raise ValueError("push-box is a 2-agent game")
        for r, c in self.agent_starts:
            if not (0 <= r < self.grid_height and 0 <= c < self.grid_width):
                raise ValueError(f"agent start {(r, c)} outside the grid")
            if (r, c) == self.box_start:
                raise ValueError("agent cannot start on the box")


@dataclass(frozen=True)
class QuadraticsConfig:
    centers:        tuple[tuple[float, float], ...] = ((5.0, 5.0), (-5.0, -5.0))
    peak_values:    tuple[float, ...] = (1.0, 0.8)
    widths:         tuple[float, ...] = (1.0, 8.0)
    action_bound:   float = 10.0
    episode_length: int = 1

    def __post_init__(self):
        object.__setattr__(self, "centers",
                           tuple(tuple(float(v) for v in c) for c in self.centers))
        object.__setattr__(self, "peak_values", tuple(float(v) for v in self.peak_values))
        object.__setattr__(self, "widths", tuple(float(v) for v in self.widths))
        self.validate()

    def validate(self) -> None:
        if len(self.centers) != 2 or any(len(c) != 2 for c in self.centers):
            raise ValueError("quadratics needs exactly two 2-D centers")
        if len(self.peak_values) != 2 or len(self.widths) != 2:
            raise ValueError("quadratics needs two peak values and two widths")
        if min(self.peak_values) <= 0 or min(self.widths) <= 0:
            raise ValueError("peak values and widths must be positive")
        if self.peak_values[0] == self.peak_values[1]:
            raise ValueError("one peak must strictly exceed the other")
        g = self.global_index
        if not self.widths[g] < self.widths[1 - g]:
            raise ValueError("the global peak must be narrower than the local peak")
        if self.action_bound <= 0:
            raise ValueError("action_bound must be positive")
        if self.episode_length < 1:
            raise ValueError(f"episode_length must be >= 1, got {self.episode_length}")

    @property
    def global_index(self) -> int:
        return int(np.argmax(self.peak_values))


# ---------- transition container --------------------------------------------
@dataclass
class Transition:
    state:        np.ndarray
    joint_action: list
    reward:       float
    next_state:   np.ndarray
    done:         bool
    info:         dict = field(default_factory=dict)


# ---------- environment contract --------------------------------------------
class Environment(ABC):
    """reset/step contract shared by all environments."""

    n_agents: int = 2
    discrete: bool = True

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.t = 0
        self.done = True

    @property
    @abstractmethod
    def obs_dim(self) -> int: ...

    @property
    @abstractmethod
    def episode_length(self) -> int: ...

    @abstractmethod
    def reset(self) -> np.ndarray: ...

    @abstractmethod
    def step(self, joint_action) -> Transition: ...

    @abstractmethod
    def optimal_return(self) -> float: ...

    # discrete envs override
    @property
    def n_actions(self) -> int:
        raise TypeError(f"{type(self).__name__} has a continuous action space")

    @property
    def n_states(self) -> int:
        raise TypeError(f"{type(self).__name__} has no tabular state space")

    def state_index(self) -> int:
        raise TypeError(f"{type(self).__name__} has no tabular state space")

    def is_success(self, episode_return: float, joint_action=None) -> bool:
        return abs(episode_return - self.optimal_return()) <= 1e-6

    # -- shared guards --
    def _begin_step(self, joint_action) -> list:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        if len(joint_action) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions, got {len(joint_action)}")
        if self.discrete:
            acts = []
            for i, a in enumerate(joint_action):
                a_int = int(a)
                if a_int != a or not 0 <= a_int < self.n_actions:
                    raise ValueError(f"agent {i}: action {a!r} outside [0, {self.n_actions})")
                acts.append(a_int)
            return acts
        return [np.asarray(a, dtype=float) for a in joint_action]

    def _end_step(self) -> bool:
        self.t += 1
        return self.t >= self.episode_length


class MatrixGame(Environment):
    """Repeated matrix game with a constant observation."""

    def __init__(self, spec: MatrixGameSpec, seed: int = 0):
        super().__init__(seed)
        self.spec = spec
        self._payoff = spec.matrix
        self._obs = np.ones(CONSTANT_OBS_DIM)

    @property
    def obs_dim(self) -> int:
        return CONSTANT_OBS_DIM

    @property
    def episode_length(self) -> int:
        return self.spec.episode_length

    @property
    def n_actions(self) -> int:
        return self._payoff.shape[0]

    @property
    def n_states(self) -> int:
        return 1

    def state_index(self) -> int:
        return 0

    def reset(self) -> np.ndarray:
        self.t = 0
        self.done = False
        return self._obs.copy()

    def step(self, joint_action) -> Transition:
        a0, a1 = self._begin_step(joint_action)
        reward = float(self._payoff[a0, a1])
        self.done = self._end_step()
        return Transition(self._obs.copy(), [a0, a1], reward, self._obs.copy(), self.done)

    def optimal_return(self) -> float:
        return self.episode_length * float(self._payoff.max())


class PushBox(Environment):
    """
    Two agents must push the box to ``goal_row`` together.  A push by a single
    agent costs ``uncoordinated_push_penalty`` and leaves the box in place.

    Observation: three row-major one-hot planes (agent 0, agent 1, box),
    flattened to ``3 * H * W``.
    """

    def __init__(self, cfg: PushBoxConfig, seed: int = 0):
        super().__init__(seed)
        self.cfg = cfg
        self.layout = _initial_layout(cfg)

    @property
    def obs_dim(self) -> int:
        return 3 * self.cfg.grid_height * self.cfg.grid_width

    @property
    def episode_length(self) -> int:
        return self.cfg.episode_length

    @property
    def n_actions(self) -> int:
        return 5

    @property
    def n_states(self) -> int:
        cells = self.cfg.grid_height * self.cfg.grid_width
        return cells * cells * self.cfg.grid_height

    def state_index(self) -> int:
        (r0, c0), (r1, c1), (box_r, _) = self.layout
        w, cells = self.cfg.grid_width, self.cfg.grid_height * self.cfg.grid_width
        return ((r0 * w + c0) * cells + (r1 * w + c1)) * self.cfg.grid_height + box_r

    def encode(self) -> np.ndarray:
        return encode_layout(self.layout, self.cfg)

    def reset(self) -> np.ndarray:
        self.t = 0
        self.done = False
        self.layout = _initial_layout(self.cfg)
        return self.encode()

    def step(self, joint_action) -> Transition:
        acts = self._begin_step(joint_action)
        state = self.encode()
        self.layout, reward, solved = pushbox_transition(self.layout, acts, self.cfg)
        horizon = self._end_step()
        self.done = solved or horizon
        return Transition(state, acts, reward, self.encode(), self.done,
                          {"box_row": self.layout[2][0], "solved": solved})

    def optimal_return(self) -> float:
        return brute_force_optimum(self)


class Quadratics(Environment):
    """Two-peak coordination game over a continuous joint action."""

    discrete = False

    def __init__(self, cfg: QuadraticsConfig, seed: int = 0):
        super().__init__(seed)
        self.cfg = cfg
        self._obs = np.ones(CONSTANT_OBS_DIM)

    @property
    def obs_dim(self) -> int:
        return CONSTANT_OBS_DIM

    @property
    def episode_length(self) -> int:
        return self.cfg.episode_length

    @property
    def action_dim(self) -> int:
        return 1

    @property
    def action_bound(self) -> float:
        return self.cfg.action_bound

    def reset(self) -> np.ndarray:
        self.t = 0
        self.done = False
        return self._obs.copy()

    def payoff(self, point) -> float:
        p = np.clip(np.asarray(point, dtype=float).reshape(2),
                    -self.cfg.action_bound, self.cfg.action_bound)
        values = [
            h * math.exp(-float(np.sum((p - np.asarray(c)) ** 2)) / (2.0 * w * w))
            for c, h, w in zip(self.cfg.centers, self.cfg.peak_values, self.cfg.widths)
        ]
        return max(values)

    def step(self, joint_action) -> Transition:
        acts = self._begin_step(joint_action)
        point = np.array([float(np.ravel(a)[0]) for a in acts])
        reward = self.payoff(point)
        self.done = self._end_step()
        return Transition(self._obs.copy(), acts, reward, self._obs.copy(), self.done,
                          {"point": point})

    def optimal_return(self) -> float:
        return self.episode_length * max(self.cfg.peak_values)

    def is_success(self, episode_return: float, joint_action=None) -> bool:
        if joint_action is None:
            return False
        point = np.array([float(np.ravel(a)[0]) for a in joint_action])
        center = np.asarray(self.cfg.centers[self.cfg.global_index])
        return float(np.linalg.norm(point - center)) <= 1.0


# ---------- push-box dynamics (pure) ----------------------------------------
def _initial_layout(cfg: PushBoxConfig):
    return (cfg.agent_starts[0], cfg.agent_starts[1], cfg.box_start)


def _can_push(agent, box, goal_row: int) -> bool:
    # next to the box and not standing on its goal side
    if max(abs(agent[0] - box[0]), abs(agent[1] - box[1])) != 1:
        return False
    return (agent[0] - box[0]) * (goal_row - box[0]) <= 0


def pushbox_transition(layout, joint_action, cfg: PushBoxConfig):
    """Apply movement, then box logic.  Returns (layout', reward, solved)."""
    box = layout[2]
    agents = []
    for pos, a in zip(layout[:2], joint_action):
        if a in _MOVES:
            dr, dc = _MOVES[a]
            nxt = (min(max(pos[0] + dr, 0), cfg.grid_height - 1),
                   min(max(pos[1] + dc, 0), cfg.grid_width - 1))
            pos = pos if nxt == box else nxt
        agents.append(pos)

    pushes = [a == PUSH for a in joint_action]
    reward, solved = 0.0, False
    if all(pushes):
        if box[0] != cfg.goal_row and all(_can_push(p, box, cfg.goal_row) for p in agents):
            box = (box[0] + (-1 if cfg.goal_row < box[0] else 1), box[1])
            if box[0] == cfg.goal_row:
                reward, solved = cfg.success_reward, True
    elif any(pushes):
        reward = cfg.uncoordinated_push_penalty
    return (agents[0], agents[1], box), reward, solved


def encode_layout(layout, cfg: PushBoxConfig) -> np.ndarray:
    planes = np.zeros((3, cfg.grid_height, cfg.grid_width))
    for k, (r, c) in enumerate(layout):
        planes[k, r, c] = 1.0
    return planes.reshape(-1)


# ---------- oracle ----------------------------------------------------------
def brute_force_optimum(env: Environment) -> float:
    """
    Best episode return of any deterministic joint plan.

    The dynamics are deterministic, so searching every open-loop plan is the
    same as a memoised search over (layout, t).
    """
    if isinstance(env, MatrixGame):
        return env.optimal_return()
    if isinstance(env, PushBox):
        return _pushbox_optimum(env.cfg)
    raise TypeError(f"no exact oracle for {type(env).__name__}")


@lru_cache(maxsize=8)
def _pushbox_optimum(cfg: PushBoxConfig) -> float:
    joint_actions = [(a0, a1) for a0 in range(5) for a1 in range(5)]

    @lru_cache(maxsize=None)
    def best(layout, t) -> float:
        if t == cfg.episode_length:
            return 0.0
        out = -math.inf
        for ja in joint_actions:
            nxt, reward, solved = pushbox_transition(layout, ja, cfg)
            out = max(out, reward + (0.0 if solved else best(nxt, t + 1)))
        return out

    try:
        return best(_initial_layout(cfg), 0)
    finally:
        best.cache_clear()


# ---------- factory ---------------------------------------------------------
ENV_KINDS = {
    "matrix":     (MatrixGameSpec, MatrixGame),
    "pushbox":    (PushBoxConfig, PushBox),
    "quadratics": (QuadraticsConfig, Quadratics),
}


def make_env(kind: str, spec, seed: int = 0) -> Environment:
    if kind not in ENV_KINDS:
        raise ValueError(f"unknown environment kind {kind!r}; "
                         f"expected one of {sorted(ENV_KINDS)}")
    spec_type, env_type = ENV_KINDS[kind]
    if not isinstance(spec, spec_type):
        raise ValueError(f"{kind!r} needs a {spec_type.__name__}, got {type(spec).__name__}")
    spec.validate()
    return env_type(spec, seed)
