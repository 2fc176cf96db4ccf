"""
experiments.py
==============
Runs an ExperimentConfig seed by seed and writes, under ``output_dir``:

    config.ini              resolved config (re-runnable)
    seed_<s>/metrics.csv    one row per training iteration
    seed_<s>/eval.csv       greedy evaluations every ``eval_every`` iterations
    seed_<s>/...            checkpoints, Q tables or the dynamics trajectory
    summary.json            RunSummary

``summarize`` turns a set of run directories into a task x method table.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from hopeful_agents.config import ExperimentConfig, emit_config
from hopeful_agents.dynamics import run_dynamics, trajectory_frame
from hopeful_agents.envs import make_env
from hopeful_agents.hysteretic import dump_qtables, hq_train
from hopeful_agents.learners import (
    evaluate, greedy_episode, init_trainer, make_workers, save_checkpoint, train_iteration,
)

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.ini"
METRICS_FILE = "metrics.csv"
GAP = "n/a"


def _strict(obj):
    """NaN becomes null so summaries stay strict JSON."""
    if isinstance(obj, dict):
        return {k: _strict(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_strict(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


@dataclass
class SeedResult:
    seed:              int
    final_mean_return: float = math.nan
    max_eval_return:   float = math.nan
    greedy_return:     float = math.nan
    per_step_payoff:   float = math.nan
    success:           bool = False
    final_mean_q:      float | None = None
    error:             str | None = None


@dataclass
class RunSummary:
    algorithm: str
    task:      str
    eta:       float | None
    seeds:     list[SeedResult] = field(default_factory=list)

    @property
    def completed(self) -> list[SeedResult]:
        return [s for s in self.seeds if s.error is None]

    @property
    def mean(self) -> float:
        vals = [s.greedy_return for s in self.completed]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def std(self) -> float:
        vals = [s.greedy_return for s in self.completed]
        return float(np.std(vals)) if vals else math.nan

    @property
    def success_fraction(self) -> float:
        return float(np.mean([s.success for s in self.seeds])) if self.seeds else math.nan

    @property
    def failed(self) -> bool:
        return any(s.error is not None for s in self.seeds)

    @property
    def method(self) -> str:
        return self.algorithm if self.eta is None else f"{self.algorithm} eta={self.eta:g}"

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "task": self.task,
            "eta": self.eta,
            "seeds": [asdict(s) for s in self.seeds],
            "mean": self.mean,
            "std": self.std,
            "success_fraction": self.success_fraction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunSummary":
        return cls(data["algorithm"], data["task"], data.get("eta"),
                   [SeedResult(**s) for s in data["seeds"]])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(_strict(self.to_dict()), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunSummary":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        for s in data["seeds"]:
            for key in ("final_mean_return", "max_eval_return", "greedy_return", "per_step_payoff"):
                if s.get(key) is None:
                    s[key] = math.nan
        return cls.from_dict(data)


# ---------- per-seed runners ------------------------------------------------
def _run_policy_gradient(cfg: ExperimentConfig, seed: int, seed_dir: Path) -> SeedResult:
    learner = replace(cfg.learner, seed=seed)
    eval_env = make_env(cfg.env_kind, cfg.env_spec, seed=seed)
    envs = make_workers(cfg.env_kind, cfg.env_spec, learner)
    state = init_trainer(eval_env, learner)

    rows, evals = [], []
    for _ in range(cfg.iterations):
        metrics = train_iteration(state, envs, learner, cfg.algorithm)
        rows.append(metrics.as_row())
        if metrics.iteration % cfg.eval_every == 0 or metrics.iteration == cfg.iterations:
            greedy_return, joint = greedy_episode(state, eval_env)
            evals.append({"iteration": metrics.iteration, "greedy_return": greedy_return,
                          "success": eval_env.is_success(greedy_return, joint)})
            logger.info("seed %d iter %d: mean return %.4g, greedy %.4g, clipped %.2f",
                        seed, metrics.iteration, metrics.mean_return, greedy_return,
                        metrics.frac_adv_clipped)

    pd.DataFrame(rows).to_csv(seed_dir / METRICS_FILE, index=False)
    pd.DataFrame(evals).to_csv(seed_dir / "eval.csv", index=False)
    save_checkpoint(state, seed_dir / "checkpoint")

    greedy_return, joint = greedy_episode(state, eval_env)
    _, max_eval = evaluate(state, eval_env, cfg.eval_episodes, greedy=False,
                           rng=np.random.default_rng(seed))
    return SeedResult(
        seed=seed,
        final_mean_return=rows[-1]["mean_return"],
        max_eval_return=max_eval,
        greedy_return=greedy_return,
        per_step_payoff=greedy_return / eval_env.episode_length,
        success=bool(eval_env.is_success(greedy_return, joint)),
    )


def _run_hysteretic(cfg: ExperimentConfig, seed: int, seed_dir: Path) -> SeedResult:
    learner = replace(cfg.learner, seed=seed, episodes=cfg.iterations, eval_every=cfg.eval_every)
    env = make_env(cfg.env_kind, cfg.env_spec, seed=seed)
    tables, curve = hq_train(env, learner)
    curve.to_csv(seed_dir / METRICS_FILE, index=False)
    dump_qtables(tables, seed_dir / "qtables.txt")
    last = curve.iloc[-1]
    greedy_return = float(last["mean_return"])
    return SeedResult(
        seed=seed,
        final_mean_return=greedy_return,
        max_eval_return=float(curve["max_return"].max()),
        greedy_return=greedy_return,
        per_step_payoff=greedy_return / env.episode_length,
        success=bool(env.is_success(greedy_return)),
        final_mean_q=float(last["mean_q"]),
    )


def _run_dynamics(cfg: ExperimentConfig, seed: int, seed_dir: Path) -> SeedResult:
    payoff = cfg.env_spec.matrix
    states = run_dynamics(payoff, cfg.learner)
    trajectory_frame(states).to_csv(seed_dir / "trajectory.csv", index=False)
    payoff_at_end = states[-1].greedy_payoff(payoff)
    greedy_return = payoff_at_end * cfg.env_spec.episode_length
    return SeedResult(
        seed=seed,
        final_mean_return=greedy_return,
        max_eval_return=greedy_return,
        greedy_return=greedy_return,
        per_step_payoff=payoff_at_end,
        success=bool(payoff_at_end == payoff.max()),
    )


RUNNERS = {
    "optimappo":    _run_policy_gradient,
    "optimaa2c":    _run_policy_gradient,
    "hysteretic_q": _run_hysteretic,
    "dynamics":     _run_dynamics,
}


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedResult:
    """Runs one seed; failures come back as a SeedResult carrying the error."""
    seed_dir = cfg.output_dir / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    try:
        return RUNNERS[cfg.algorithm](cfg, seed, seed_dir)
    except Exception as e:
        logger.exception("seed %d failed", seed)
        return SeedResult(seed=seed, error=f"seed {seed}: {type(e).__name__}: {e}")


def run(cfg: ExperimentConfig) -> RunSummary:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / CONFIG_FILE).write_text(emit_config(cfg), encoding="utf-8")

    # the recurrence is deterministic, one pass is enough
    seeds = cfg.seeds[:1] if cfg.algorithm == "dynamics" else cfg.seeds
    if cfg.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(seeds))) as pool:
            results = list(pool.map(run_seed, [cfg] * len(seeds), seeds))
    else:
        results = [run_seed(cfg, s) for s in seeds]

    summary = RunSummary(cfg.algorithm, cfg.task_name, getattr(cfg.learner, "eta", None), results)
    summary.save(cfg.output_dir / SUMMARY_FILE)
    logger.info("%s on %s: mean greedy return %.4g (std %.3g), success %.0f%%",
                summary.method, summary.task, summary.mean, summary.std,
                100 * summary.success_fraction)
    return summary


def eta_sweep(cfg: ExperimentConfig, etas) -> dict[float, RunSummary]:
    """One run per optimism slope, into ``output_dir/eta_<value>``."""
    if not hasattr(cfg.learner, "eta"):
        raise ValueError(f"{cfg.algorithm} has no optimism slope to sweep")
    out = {}
    for eta in etas:
        sub = replace(cfg, learner=replace(cfg.learner, eta=float(eta)),
                      output_dir=cfg.output_dir / f"eta_{float(eta):g}")
        out[float(eta)] = run(sub)
    return out


# ---------- summaries -------------------------------------------------------
def _load_cell(directory: Path) -> dict:
    try:
        summary = RunSummary.load(directory / SUMMARY_FILE)
        return {"task": summary.task, "method": summary.method, "value": summary.mean,
                "std": summary.std, "success_fraction": summary.success_fraction,
                "source": str(directory)}
    except (OSError, ValueError, KeyError, TypeError) as e:
        logger.warning("%s: unreadable summary (%s)", directory, e)
        return {"task": directory.name, "method": GAP, "value": math.nan, "std": math.nan,
                "success_fraction": math.nan, "source": str(directory)}


def summarize(run_dirs, csv_path: str | Path | None = None) -> tuple[str, pd.DataFrame]:
    """
    Aligned text table (rows = tasks, columns = methods) and its CSV twin.
    Unreadable directories leave a gap instead of aborting the table.
    """
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ValueError("summarize needs at least one run directory")
    cells = pd.DataFrame([_load_cell(d) for d in run_dirs])
    table = cells.pivot_table(index="task", columns="method", values="value",
                              aggfunc="first", dropna=False, sort=False)
    table.columns.name = None
    if csv_path is not None:
        table.to_csv(csv_path)
    text = table.to_string(na_rep=GAP, float_format=lambda v: f"{v:g}")
    return text, table
