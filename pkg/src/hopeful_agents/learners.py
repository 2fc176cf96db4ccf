"""
learners.py
===========
Multi-agent PPO and A2C with optimistic advantage shaping.

* one independent policy per agent (no parameter sharing)
* one centralised critic over the full state, regressed on raw targets
* policies are updated simultaneously from the same frozen batch
* rollouts run one worker per environment, merged in fixed worker order

Also home to the exact tabular tooling behind ``fixed_point_check``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hopeful_agents.advantage import AdvantageBatch, AdvantageConfig, compute_advantages
from hopeful_agents.approx import (
    OptState, ParamSet, PolicyHead, adam_init, adam_step, backward,
    categorical_act, categorical_entropy, clip_grad_norm, forward, gaussian_act,
    gaussian_entropy, gaussian_log_prob, load_params, log_softmax, mlp_init,
    save_params,
)
from hopeful_agents.envs import Environment, make_env

logger = logging.getLogger(__name__)

ALGORITHMS = ("optimappo", "optimaa2c")
MAX_ENUMERABLE_PAIRS = 10_000


class RolloutError(RuntimeError):
    """A rollout worker failed; the message names the worker index."""


# ---------- configuration ---------------------------------------------------
@dataclass(frozen=True)
class PPOConfig:
    clip_eps:          float = 0.2
    eta:               float = 0.0
    policy_lr:         float = 3e-4
    critic_lr:         float = 1e-3
    rollout_threads:   int = 8
    steps_per_thread:  int = 100
    ppo_epochs:        int = 5
    num_minibatch:     int = 2
    entropy_coef:      float = 0.01
    max_grad_norm:     float = 10.0
    gamma:             float = 0.99
    lam:               float = 0.95
    seed:              int = 0
    hidden_sizes:      tuple[int, ...] = (64, 64)
    scale_mode:        str = "none"
    shape_advantages:  bool = True
    log_std_init:      float = 0.0
    parallel_rollouts: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        self.validate()

    def validate(self) -> None:
        if self.clip_eps <= 0:
            raise ValueError(f"clip_eps must be > 0, got {self.clip_eps}")
        for name in ("policy_lr", "critic_lr", "max_grad_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("rollout_threads", "steps_per_thread", "ppo_epochs", "num_minibatch"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.batch_size % self.num_minibatch:
            raise ValueError(f"num_minibatch {self.num_minibatch} does not divide the "
                             f"batch size {self.batch_size}")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be >= 0")
        self.advantage_config.validate()

    @property
    def batch_size(self) -> int:
        return self.rollout_threads * self.steps_per_thread

    @property
    def advantage_config(self) -> AdvantageConfig:
        return AdvantageConfig(self.gamma, self.lam, self.eta, self.scale_mode)


# Matrix games: each repeat is an independent round seen through a constant
# observation, so advantages are TD(0) against a one-step baseline.
_ENV_DEFAULTS = {
    "matrix":     dict(steps_per_thread=25, num_minibatch=1, gamma=0.0, lam=0.0),
    "pushbox":    dict(steps_per_thread=100, num_minibatch=2, gamma=0.99, lam=0.95),
    "quadratics": dict(steps_per_thread=25, num_minibatch=1, gamma=0.99, lam=0.95),
}


def default_ppo_config(env_kind: str, **overrides) -> PPOConfig:
    if env_kind not in _ENV_DEFAULTS:
        raise ValueError(f"no learner defaults for environment kind {env_kind!r}")
    return PPOConfig(**{**_ENV_DEFAULTS[env_kind], **overrides})


# ---------- containers ------------------------------------------------------
@dataclass
class RolloutBatch:
    """Arrays are laid out (threads, steps, ...); rewards are shared by all agents."""
    obs:             np.ndarray
    actions:         list[np.ndarray]
    log_probs:       list[np.ndarray]
    rewards:         np.ndarray
    values:          np.ndarray
    dones:           np.ndarray
    bootstrap:       np.ndarray
    episode_returns: list[float] = field(default_factory=list)

    @property
    def n_agents(self) -> int:
        return len(self.actions)

    @property
    def n_transitions(self) -> int:
        return int(self.rewards.size)

    def flat(self, arr: np.ndarray) -> np.ndarray:
        lead = self.rewards.shape
        return arr.reshape((lead[0] * lead[1],) + arr.shape[2:])


@dataclass
class TrainerState:
    policies:       list[ParamSet]
    policy_opts:    list[OptState]
    critic:         ParamSet
    critic_opt:     OptState
    heads:          list[PolicyHead]
    worker_rngs:    list[np.random.Generator]
    update_rng:     np.random.Generator
    iteration:      int = 0
    env_steps:      int = 0
    worker_obs:     list = field(default_factory=list)
    worker_returns: list = field(default_factory=list)

    @property
    def n_agents(self) -> int:
        return len(self.policies)


@dataclass
class IterationMetrics:
    iteration:        int
    env_steps:        int
    mean_return:      float
    max_return:       float
    policy_loss:      float
    value_loss:       float
    entropy:          tuple[float, ...]
    frac_adv_clipped: float
    mean_raw_adv:     float

    def as_row(self) -> dict:
        row = {
            "iteration":   self.iteration,
            "env_steps":   self.env_steps,
            "mean_return": self.mean_return,
            "max_return":  self.max_return,
            "policy_loss": self.policy_loss,
            "value_loss":  self.value_loss,
        }
        row |= {f"entropy_agent_{k}": h for k, h in enumerate(self.entropy)}
        row |= {"frac_adv_clipped": self.frac_adv_clipped,
                "mean_raw_adv":     self.mean_raw_adv}
        return row


# ---------- construction ----------------------------------------------------
def _child_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def policy_head_for(env: Environment) -> PolicyHead:
    if env.discrete:
        return PolicyHead("categorical", env.n_actions)
    return PolicyHead("gaussian", env.action_dim, env.action_bound)


def init_trainer(env: Environment, cfg: PPOConfig) -> TrainerState:
    """Fresh policies, critic, optimisers and rng streams derived from ``cfg.seed``."""
    root = np.random.SeedSequence(cfg.seed)
    agent_ss, critic_ss, update_ss, *worker_ss = root.spawn(3 + cfg.rollout_threads)
    head = policy_head_for(env)
    policies = []
    for ss in agent_ss.spawn(env.n_agents):
        policies.append(mlp_init(
            [env.obs_dim, *cfg.hidden_sizes, head.action_dim], _child_seed(ss),
            log_std_init=cfg.log_std_init if head.kind == "gaussian" else None,
        ))
    critic = mlp_init([env.obs_dim, *cfg.hidden_sizes, 1], _child_seed(critic_ss), out_gain=1.0)
    return TrainerState(
        policies=policies,
        policy_opts=[adam_init(p, cfg.policy_lr) for p in policies],
        critic=critic,
        critic_opt=adam_init(critic, cfg.critic_lr),
        heads=[head] * env.n_agents,
        worker_rngs=[np.random.default_rng(ss) for ss in worker_ss],
        update_rng=np.random.default_rng(update_ss),
        worker_obs=[None] * cfg.rollout_threads,
        worker_returns=[0.0] * cfg.rollout_threads,
    )


def make_workers(kind: str, spec, cfg: PPOConfig) -> list[Environment]:
    return [make_env(kind, spec, seed=cfg.seed * 1000 + i) for i in range(cfg.rollout_threads)]


# ---------- acting ----------------------------------------------------------
def act(params: ParamSet, head: PolicyHead, obs, rng, greedy: bool = False):
    """Returns (action, log_prob); Gaussian actions are the unclamped sample."""
    out, _ = forward(params, obs)
    if head.kind == "categorical":
        a, logp, _ = categorical_act(out[0], rng, greedy)
        return a, logp
    return gaussian_act(out[0], params.log_std, rng, greedy)


def state_value(critic: ParamSet, obs) -> float:
    return float(forward(critic, obs)[0][0, 0])


def _run_worker(env: Environment, rng, policies, heads, critic, obs, running: float,
                steps: int) -> dict:
    n_agents = len(policies)
    if obs is None or env.done:
        obs, running = env.reset(), 0.0
    rec = {
        "obs": np.zeros((steps, obs.size)),
        "actions": [[] for _ in range(n_agents)],
        "log_probs": np.zeros((n_agents, steps)),
        "rewards": np.zeros(steps), "values": np.zeros(steps), "dones": np.zeros(steps),
        "returns": [],
    }
    for t in range(steps):
        rec["obs"][t] = obs
        rec["values"][t] = state_value(critic, obs)
        joint = []
        for k in range(n_agents):
            a, logp = act(policies[k], heads[k], obs, rng)
            rec["actions"][k].append(a)
            rec["log_probs"][k, t] = logp
            joint.append(a)
        tr = env.step(joint)
        rec["rewards"][t], rec["dones"][t] = tr.reward, float(tr.done)
        running += tr.reward
        if tr.done:
            rec["returns"].append(running)
            obs, running = env.reset(), 0.0
        else:
            obs = tr.next_state
    rec["bootstrap"] = 0.0 if rec["dones"][-1] else state_value(critic, obs)
    rec["next_obs"], rec["running"] = obs, running
    return rec


def collect_rollout(state: TrainerState, envs: list[Environment], cfg: PPOConfig) -> RolloutBatch:
    if len(envs) != cfg.rollout_threads:
        raise ValueError(f"expected {cfg.rollout_threads} environments, got {len(envs)}")
    # workers only read these; updates build new objects
    policies, heads, critic = list(state.policies), list(state.heads), state.critic

    def work(i: int) -> dict:
        try:
            return _run_worker(envs[i], state.worker_rngs[i], policies, heads, critic,
                               state.worker_obs[i], state.worker_returns[i],
                               cfg.steps_per_thread)
        except Exception as e:
            raise RolloutError(f"rollout worker {i}: {e}") from e

    if cfg.parallel_rollouts and cfg.rollout_threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.rollout_threads) as pool:
            recs = list(pool.map(work, range(cfg.rollout_threads)))
    else:
        recs = [work(i) for i in range(cfg.rollout_threads)]

    for i, rec in enumerate(recs):
        state.worker_obs[i], state.worker_returns[i] = rec["next_obs"], rec["running"]
    n_agents = state.n_agents
    return RolloutBatch(
        obs=np.stack([r["obs"] for r in recs]),
        actions=[np.stack([np.asarray(r["actions"][k]) for r in recs]) for k in range(n_agents)],
        log_probs=[np.stack([r["log_probs"][k] for r in recs]) for k in range(n_agents)],
        rewards=np.stack([r["rewards"] for r in recs]),
        values=np.stack([r["values"] for r in recs]),
        dones=np.stack([r["dones"] for r in recs]),
        bootstrap=np.array([r["bootstrap"] for r in recs]),
        episode_returns=[ret for r in recs for ret in r["returns"]],
    )


# ---------- losses ----------------------------------------------------------
def _head_terms(params: ParamSet, head: PolicyHead, obs, actions):
    out, cache = forward(params, obs)
    if head.kind == "categorical":
        logp_all = log_softmax(out)
        logp = logp_all[np.arange(len(out)), np.asarray(actions, dtype=int)]
        ent = categorical_entropy(logp_all)
        return out, cache, logp, ent, logp_all
    actions = np.asarray(actions, dtype=float).reshape(out.shape)
    logp = gaussian_log_prob(actions, out, params.log_std)
    ent = np.full(len(out), gaussian_entropy(params.log_std))
    return out, cache, logp, ent, actions


def _head_backward(params: ParamSet, head: PolicyHead, cache, out, extra, actions,
                   g_logp: np.ndarray, ent: np.ndarray, entropy_coef: float) -> ParamSet:
    """Gradient of ``sum(g_logp * logp) - entropy_coef * mean(entropy)``."""
    n = len(out)
    if head.kind == "categorical":
        logp_all = extra
        p = np.exp(logp_all)
        onehot = np.zeros_like(p)
        onehot[np.arange(n), np.asarray(actions, dtype=int)] = 1.0
        g_out = g_logp[:, None] * (onehot - p)
        g_out += (entropy_coef / n) * p * (logp_all + ent[:, None])
        return backward(params, cache, g_out)
    taken = extra
    inv_var = np.exp(-2.0 * params.log_std)
    diff = taken - out
    grads = backward(params, cache, g_logp[:, None] * diff * inv_var)
    grads.log_std = (g_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0) \
        - entropy_coef * np.ones_like(params.log_std)
    return grads


def ppo_policy_loss(params: ParamSet, head: PolicyHead, obs, actions, old_log_probs,
                    advantages, clip_eps: float, entropy_coef: float = 0.0):
    """
    Clipped surrogate on (shaped) advantages.

    Returns (loss, grads, info) with
    ``loss = -mean(min(r*A, clip(r, 1-eps, 1+eps)*A)) - entropy_coef * mean(H)``.
    """
    out, cache, logp, ent, extra = _head_terms(params, head, obs, actions)
    adv = np.asarray(advantages, dtype=float)
    log_ratio = logp - np.asarray(old_log_probs, dtype=float)
    ratio = np.exp(log_ratio)
    if not np.all(np.isfinite(ratio)):
        raise FloatingPointError(
            f"non-finite importance ratio: max |log pi - log pi_old| = "
            f"{np.nanmax(np.abs(log_ratio)):.3g}")
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    objective = np.minimum(surr1, surr2)
    n = len(adv)
    loss = -float(objective.mean()) - entropy_coef * float(ent.mean())
    # d min / d ratio is zero whenever the clipped branch is the smaller one
    g_logp = -(adv * ratio * (surr1 <= surr2)) / n
    grads = _head_backward(params, head, cache, out, extra, actions, g_logp, ent, entropy_coef)
    info = {
        "entropy":    float(ent.mean()),
        "approx_kl":  float(np.mean(-log_ratio)),
        "clip_frac":  float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        "surrogate":  float(objective.mean()),
    }
    return loss, grads, info


def pg_policy_loss(params: ParamSet, head: PolicyHead, obs, actions, advantages,
                   entropy_coef: float = 0.0):
    """Advantage actor-critic loss ``-mean(A * log pi) - entropy_coef * mean(H)``."""
    out, cache, logp, ent, extra = _head_terms(params, head, obs, actions)
    adv = np.asarray(advantages, dtype=float)
    n = len(adv)
    loss = -float(np.mean(adv * logp)) - entropy_coef * float(ent.mean())
    grads = _head_backward(params, head, cache, out, extra, actions, -adv / n, ent, entropy_coef)
    return loss, grads, {"entropy": float(ent.mean())}


def critic_loss(params: ParamSet, obs, targets):
    """``0.5 * mean((V(s) - target)^2)`` and its gradients."""
    values, cache = forward(params, obs)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if values.shape != (len(targets), 1):
        raise ValueError(f"critic output {values.shape} vs {len(targets)} targets")
    diff = values[:, 0] - targets
    loss = 0.5 * float(np.mean(diff * diff))
    return loss, backward(params, cache, diff[:, None] / len(targets))


# ---------- updates ---------------------------------------------------------
def _apply(params: ParamSet, opt: OptState, grads: ParamSet, max_grad_norm: float):
    grads, _ = clip_grad_norm(grads, max_grad_norm)
    return adam_step(opt, params, grads)


def _advantages(batch: RolloutBatch, cfg: PPOConfig) -> AdvantageBatch:
    return compute_advantages(batch.rewards, batch.values, batch.bootstrap, batch.dones,
                              cfg.advantage_config, shape=cfg.shape_advantages)


def _metrics(state: TrainerState, batch: RolloutBatch, adv: AdvantageBatch,
             policy_losses, value_losses, entropies) -> IterationMetrics:
    state.iteration += 1
    state.env_steps += batch.n_transitions
    rets = batch.episode_returns
    return IterationMetrics(
        iteration=state.iteration,
        env_steps=state.env_steps,
        mean_return=float(np.mean(rets)) if rets else math.nan,
        max_return=float(np.max(rets)) if rets else math.nan,
        policy_loss=float(np.mean(policy_losses)),
        value_loss=float(np.mean(value_losses)),
        entropy=tuple(float(np.mean(e)) for e in entropies),
        frac_adv_clipped=adv.frac_clipped,
        mean_raw_adv=float(np.mean(adv.raw_adv)),
    )


def ppo_update(state: TrainerState, batch: RolloutBatch, cfg: PPOConfig) -> IterationMetrics:
    adv = _advantages(batch, cfg)
    obs = batch.flat(batch.obs)
    actions = [batch.flat(a) for a in batch.actions]
    old_logp = [batch.flat(lp) for lp in batch.log_probs]
    shaped = batch.flat(adv.shaped_adv)
    targets = batch.flat(adv.value_targets)

    n = batch.n_transitions
    mb = n // cfg.num_minibatch
    policy_losses, value_losses = [], []
    entropies = [[] for _ in range(state.n_agents)]
    for epoch in range(cfg.ppo_epochs):
        perm = state.update_rng.permutation(n)
        for m in range(cfg.num_minibatch):
            idx = perm[m * mb:(m + 1) * mb]
            new_policies, new_opts = [], []
            for k in range(state.n_agents):
                loss, grads, info = ppo_policy_loss(
                    state.policies[k], state.heads[k], obs[idx], actions[k][idx],
                    old_logp[k][idx], shaped[idx], cfg.clip_eps, cfg.entropy_coef)
                p, o = _apply(state.policies[k], state.policy_opts[k], grads, cfg.max_grad_norm)
                new_policies.append(p)
                new_opts.append(o)
                policy_losses.append(loss)
                entropies[k].append(info["entropy"])
                logger.debug("epoch %d mb %d agent %d: loss %.4g kl %.3g clip %.3f",
                             epoch, m, k, loss, info["approx_kl"], info["clip_frac"])
            v_loss, v_grads = critic_loss(state.critic, obs[idx], targets[idx])
            state.critic, state.critic_opt = _apply(state.critic, state.critic_opt, v_grads,
                                                    cfg.max_grad_norm)
            state.policies, state.policy_opts = new_policies, new_opts
            value_losses.append(v_loss)
    return _metrics(state, batch, adv, policy_losses, value_losses, entropies)


def a2c_update(state: TrainerState, batch: RolloutBatch, cfg: PPOConfig) -> IterationMetrics:
    """Single full-batch step: no ratio, no ratio clipping."""
    adv = _advantages(batch, cfg)
    obs = batch.flat(batch.obs)
    shaped = batch.flat(adv.shaped_adv)
    policy_losses, entropies = [], []
    new_policies, new_opts = [], []
    for k in range(state.n_agents):
        loss, grads, info = pg_policy_loss(state.policies[k], state.heads[k], obs,
                                           batch.flat(batch.actions[k]), shaped,
                                           cfg.entropy_coef)
        p, o = _apply(state.policies[k], state.policy_opts[k], grads, cfg.max_grad_norm)
        new_policies.append(p)
        new_opts.append(o)
        policy_losses.append(loss)
        entropies.append([info["entropy"]])
    v_loss, v_grads = critic_loss(state.critic, obs, batch.flat(adv.value_targets))
    state.critic, state.critic_opt = _apply(state.critic, state.critic_opt, v_grads,
                                            cfg.max_grad_norm)
    state.policies, state.policy_opts = new_policies, new_opts
    return _metrics(state, batch, adv, policy_losses, [v_loss], entropies)


UPDATES = {"optimappo": ppo_update, "optimaa2c": a2c_update}


def train_iteration(state: TrainerState, envs: list[Environment], cfg: PPOConfig,
                    algorithm: str = "optimappo") -> IterationMetrics:
    if algorithm not in UPDATES:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    batch = collect_rollout(state, envs, cfg)
    return UPDATES[algorithm](state, batch, cfg)


# ---------- evaluation ------------------------------------------------------
def greedy_episode(state: TrainerState, env: Environment, greedy: bool = True, rng=None):
    """Plays one episode; returns (episode return, last joint action)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    obs, total, joint = env.reset(), 0.0, None
    while True:
        joint = [act(p, h, obs, rng, greedy)[0] for p, h in zip(state.policies, state.heads)]
        tr = env.step(joint)
        total += tr.reward
        obs = tr.next_state
        if tr.done:
            return total, joint


def evaluate(state: TrainerState, env: Environment, episodes: int, greedy: bool = True,
             rng=None) -> tuple[float, float]:
    """(mean return, max return) over ``episodes``; never touches parameters."""
    rng = rng if rng is not None else np.random.default_rng(0)
    returns = [greedy_episode(state, env, greedy, rng)[0] for _ in range(episodes)]
    return float(np.mean(returns)), float(np.max(returns))


# ---------- checkpoints -----------------------------------------------------
def save_checkpoint(state: TrainerState, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, p in enumerate(state.policies):
        save_params(p, directory / f"policy_agent{k}.bin")
    save_params(state.critic, directory / "critic.bin")


def load_checkpoint(directory: str | Path, env: Environment, cfg: PPOConfig) -> TrainerState:
    directory = Path(directory)
    state = init_trainer(env, cfg)
    state.policies = [load_params(directory / f"policy_agent{k}.bin")
                      for k in range(env.n_agents)]
    state.critic = load_params(directory / "critic.bin")
    state.policy_opts = [adam_init(p, cfg.policy_lr) for p in state.policies]
    state.critic_opt = adam_init(state.critic, cfg.critic_lr)
    return state


# ---------- exact tabular analysis ------------------------------------------
@dataclass
class TabularMDP:
    """
    ``transitions[s, a, s']`` over joint actions; rows may sum to less than
    one, the missing mass is termination.
    """
    transitions: np.ndarray
    rewards:     np.ndarray
    action_dims: tuple[int, ...]
    gamma:       float
    initial:     np.ndarray

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        s, a = self.rewards.shape
        if self.transitions.shape != (s, a, s):
            raise ValueError(f"transitions {self.transitions.shape} vs rewards {(s, a)}")
        if int(np.prod(self.action_dims)) != a:
            raise ValueError(f"action_dims {self.action_dims} do not multiply to {a}")

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_joint(self) -> int:
        return self.rewards.shape[1]


def one_shot_matrix_mdp(payoff, gamma: float = 0.99) -> TabularMDP:
    payoff = np.asarray(payoff, dtype=float)
    n = payoff.size
    return TabularMDP(np.zeros((1, n, 1)), payoff.reshape(1, n), payoff.shape, gamma,
                      np.ones(1))


def chain_mdp(gamma: float = 0.9) -> TabularMDP:
    """Two states; action 0 stays, action 1 switches; staying in state 1 pays 1."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    P[0, 1, 1] = P[1, 1, 0] = 1.0
    R = np.array([[0.0, 0.0], [1.0, 0.0]])
    return TabularMDP(P, R, (2,), gamma, np.array([1.0, 0.0]))


def joint_policy(mdp: TabularMDP, agent_policies) -> np.ndarray:
    pols = [np.asarray(p, dtype=float) for p in agent_policies]
    out = np.zeros((mdp.n_states, mdp.n_joint))
    for s in range(mdp.n_states):
        prod = pols[0][s]
        for p in pols[1:]:
            prod = np.multiply.outer(prod, p[s])
        out[s] = np.ravel(prod)
    return out


def policy_values(mdp: TabularMDP, pi: np.ndarray):
    """Exact (V, Q) of a joint policy via one linear solve."""
    P_pi = np.einsum("sa,sat->st", pi, mdp.transitions)
    r_pi = np.sum(pi * mdp.rewards, axis=1)
    V = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)
    Q = mdp.rewards + mdp.gamma * mdp.transitions @ V
    return V, Q


def optimal_policies(mdp: TabularMDP, tol: float = 1e-12, max_iter: int = 100_000):
    """Deterministic per-agent tables of a greedy joint optimum (value iteration)."""
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = mdp.rewards + mdp.gamma * mdp.transitions @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = mdp.rewards + mdp.gamma * mdp.transitions @ V
    best = np.unravel_index(np.argmax(Q, axis=1), mdp.action_dims)
    tables = []
    for i, n_i in enumerate(mdp.action_dims):
        table = np.zeros((mdp.n_states, n_i))
        table[np.arange(mdp.n_states), best[i]] = 1.0
        tables.append(table)
    return tables


def fixed_point_check(mdp: TabularMDP, agent_policies) -> float:
    """
    Norm of the clipped-advantage policy gradient for softmax-tabular agents,
    computed by exact enumeration:

        grad_i[s, b] = d(s) * sum_a pi(a|s) * max(A(s, a), 0) * (1[a_i = b] - pi_i(b|s))

    At an optimal policy every advantage is <= 0, so the result is exactly 0.
    """
    pairs = mdp.n_states * mdp.n_joint
    if pairs > MAX_ENUMERABLE_PAIRS:
        raise ValueError(f"{pairs} state-action pairs exceed the exact-enumeration limit "
                         f"of {MAX_ENUMERABLE_PAIRS}")
    pols = [np.asarray(p, dtype=float) for p in agent_policies]
    pi = joint_policy(mdp, pols)
    V, Q = policy_values(mdp, pi)
    clipped = np.maximum(Q - V[:, None], 0.0)
    P_pi = np.einsum("sa,sat->st", pi, mdp.transitions)
    d = np.linalg.solve((np.eye(mdp.n_states) - mdp.gamma * P_pi).T, mdp.initial)

    joint_idx = np.unravel_index(np.arange(mdp.n_joint), mdp.action_dims)
    total = 0.0
    for i, pol in enumerate(pols):
        onehot = np.zeros((mdp.n_joint, pol.shape[1]))
        onehot[np.arange(mdp.n_joint), joint_idx[i]] = 1.0
        weight = pi * clipped                          # (S, A)
        grad = d[:, None] * (weight @ onehot - weight.sum(axis=1, keepdims=True) * pol)
        total += float(np.sum(grad * grad))
    return math.sqrt(total)
