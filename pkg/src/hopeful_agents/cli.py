"""
cli.py
======
Command-line entry point.

> hopeful train configs/climbing.ini
> hopeful train configs/climbing.ini --eta-sweep 1.0 0.8 0.5 0.2 0.0
> hopeful eval runs/climbing/seed_0/checkpoint configs/climbing.ini
> hopeful dynamics configs/dynamics.ini
> hopeful summarize runs/climbing runs/climbing_eta1 --csv table.csv

Exit status: 0 success, 1 config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from hopeful_agents.config import ConfigError, parse_config
from hopeful_agents.envs import make_env
from hopeful_agents.experiments import eta_sweep, run, summarize
from hopeful_agents.learners import ALGORITHMS, evaluate, greedy_episode, load_checkpoint

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _report(summary) -> int:
    if summary.failed:
        for s in summary.seeds:
            if s.error:
                print(f"❌  {s.error}")
        return EXIT_RUNTIME
    print(f"✅  {summary.method} on {summary.task}: greedy return "
          f"{summary.mean:g} ± {summary.std:g}, success {summary.success_fraction:.0%}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    if args.eta_sweep:
        results = eta_sweep(cfg, args.eta_sweep)
        return max(_report(s) for s in results.values())
    return _report(run(cfg))


def cmd_dynamics(args) -> int:
    cfg = parse_config(args.config)
    if cfg.algorithm != "dynamics":
        raise ConfigError(f"algorithm is {cfg.algorithm!r}; the dynamics command needs "
                          f"algorithm = dynamics", None, str(args.config))
    summary = run(cfg)
    print(f"✅  wrote {cfg.output_dir / f'seed_{cfg.seeds[0]}' / 'trajectory.csv'}")
    return _report(summary)


def cmd_eval(args) -> int:
    cfg = parse_config(args.config)
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"checkpoints exist only for {ALGORITHMS}", None, str(args.config))
    env = make_env(cfg.env_kind, cfg.env_spec, seed=cfg.seeds[0])
    state = load_checkpoint(args.checkpoint, env, replace(cfg.learner, seed=cfg.seeds[0]))
    episodes = args.episodes or cfg.eval_episodes
    mean, best = evaluate(state, env, episodes, greedy=not args.sampled,
                          rng=np.random.default_rng(cfg.seeds[0]))
    greedy_return, joint = greedy_episode(state, env)
    mark = "✅" if env.is_success(greedy_return, joint) else "⚠️ "
    print(f"{mark}  {episodes} episodes: mean {mean:g}, max {best:g}; "
          f"greedy joint action {joint} -> {greedy_return:g}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    dirs = []
    for d in args.dirs:
        if not Path(d).is_dir():
            print(f"⚠️  {d} missing, left as a gap")
        dirs.append(d)
    text, _ = summarize(dirs, args.csv)
    print(text)
    if args.csv:
        print(f"✅  wrote {args.csv}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hopeful",
                                 description="Optimistic multi-agent policy gradients")
    ap.add_argument("--log-level", default="INFO",
                    choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run every seed of an experiment file")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel seed processes (overrides [experiment] workers)")
    p.add_argument("--eta-sweep", type=float, nargs="+", default=None, metavar="ETA",
                   help="run once per optimism slope into output_dir/eta_<value>")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--sampled", action="store_true", help="sample instead of argmax/mean")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dynamics", help="exact softmax dynamics on a matrix game")
    p.add_argument("config")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("summarize", help="task x method table over run directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--csv", default=None, help="also write the table as CSV")
    p.set_defaults(func=cmd_summarize)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"❌  {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        print(f"❌  {type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
