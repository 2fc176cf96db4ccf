"""
config.py
=========
Experiment files: INI text with three sections.

    [experiment]
    algorithm     = optimappo        # optimappo | optimaa2c | hysteretic_q | dynamics
    seeds         = 0, 1, 2, 3, 4
    iterations    = 2000             # PPO/A2C iterations, or Q-learning episodes
    eval_every    = 100
    eval_episodes = 10
    output_dir    = runs/climbing
    workers       = 1                # seeds run in parallel processes when > 1

    [env]
    kind = matrix                    # matrix | pushbox | quadratics
    game = climbing                  # matrix only: climbing | penalty | custom
    k    = -100                      # penalty only

    [learner]
    eta  = 0.0

``[env]`` takes the fields of the environment's spec dataclass, ``[learner]``
the fields of the algorithm's hyper-parameter dataclass.  Omitted keys keep
their defaults, unknown keys are an error.  Tuples are written comma
separated, grids as rows separated by ``;``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from hopeful_agents.dynamics import DynamicsConfig
from hopeful_agents.envs import (
    ENV_KINDS, MatrixGameSpec, PushBoxConfig, QuadraticsConfig, climbing_spec, penalty_spec,
)
from hopeful_agents.hysteretic import HystQConfig
from hopeful_agents.learners import ALGORITHMS, PPOConfig, default_ppo_config

OUTPUT_ROOT_ENV = "HOPEFUL_AGENTS_OUTPUT_ROOT"
ALL_ALGORITHMS = ALGORITHMS + ("hysteretic_q", "dynamics")
SECTIONS = ("experiment", "env", "learner")

# owned by [experiment]; per-seed and per-run values are filled in by the runner
_RESERVED_LEARNER_KEYS = {"seed", "episodes", "eval_every"}
_LEARNER_TYPES = {
    "optimappo":    PPOConfig,
    "optimaa2c":    PPOConfig,
    "hysteretic_q": HystQConfig,
    "dynamics":     DynamicsConfig,
}


class ConfigError(ValueError):
    """Any problem with an experiment file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.source = source


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm:     str = "optimappo"
    env_kind:      str = "matrix"
    env_spec:      MatrixGameSpec | PushBoxConfig | QuadraticsConfig = field(
        default_factory=climbing_spec)
    learner:       PPOConfig | HystQConfig | DynamicsConfig = field(
        default_factory=lambda: default_ppo_config("matrix"))
    seeds:         tuple[int, ...] = (0,)
    iterations:    int = 2000
    eval_every:    int = 100
    eval_episodes: int = 10
    output_dir:    Path = Path("runs")
    workers:       int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALL_ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALL_ALGORITHMS}, got {self.algorithm!r}")
        if self.env_kind not in ENV_KINDS:
            raise ValueError(f"unknown env kind {self.env_kind!r}")
        if not isinstance(self.env_spec, ENV_KINDS[self.env_kind][0]):
            raise ValueError(f"env kind {self.env_kind!r} does not match "
                             f"{type(self.env_spec).__name__}")
        if not isinstance(self.learner, _LEARNER_TYPES[self.algorithm]):
            raise ValueError(f"{self.algorithm} needs a {_LEARNER_TYPES[self.algorithm].__name__} "
                             f"learner section")
        if self.algorithm == "hysteretic_q" and self.env_kind == "quadratics":
            raise ValueError("hysteretic_q requires a discrete environment")
        if self.algorithm == "dynamics" and self.env_kind != "matrix":
            raise ValueError("dynamics runs on matrix games only")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"duplicate seeds in {self.seeds}")
        if self.iterations < 1 or self.eval_every < 1 or self.eval_episodes < 1 or self.workers < 1:
            raise ValueError("iterations, eval_every, eval_episodes and workers must be >= 1")

    @property
    def task_name(self) -> str:
        return getattr(self.env_spec, "name", self.env_kind)


# ---------- value coercion --------------------------------------------------
_BOOLEANS = configparser.ConfigParser.BOOLEAN_STATES


def _scalar(token: str, like):
    token = token.strip()
    if isinstance(like, bool):
        if token.lower() not in _BOOLEANS:
            raise ValueError(f"not a boolean: {token!r}")
        return _BOOLEANS[token.lower()]
    if isinstance(like, int):
        return int(token)
    if isinstance(like, float):
        return float(token)
    return token


def _split(raw: str) -> list[str]:
    return [t for t in re.split(r"[,\s]+", raw.strip()) if t]


def coerce(raw: str, default):
    """Parse ``raw`` into the type of ``default``."""
    if isinstance(default, tuple):
        if default and isinstance(default[0], tuple):
            like = default[0][0]
            return tuple(tuple(_scalar(t, like) for t in _split(row))
                         for row in raw.split(";") if row.strip())
        like = default[0] if default else 0
        return tuple(_scalar(t, like) for t in _split(raw))
    if isinstance(default, Path):
        return Path(raw.strip())
    return _scalar(raw, default)


def render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(render(v) for v in row) for row in value)
        return ", ".join(render(v) for v in value)
    return str(value)


# ---------- parsing ---------------------------------------------------------
def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line number, for error messages."""
    out, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
        elif section and stripped and not stripped.startswith(("#", ";")):
            key = re.split(r"[=:]", stripped, maxsplit=1)[0].strip().lower()
            out.setdefault((section, key), n)
    return out


def _build(cls, base, values: dict[str, str], section: str, lines, source):
    """Overlay ``values`` on ``base`` (an instance of ``cls``)."""
    names = {f.name for f in dataclasses.fields(cls)}
    overrides = {}
    for key, raw in values.items():
        line = lines.get((section, key))
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]", line, source)
        try:
            overrides[key] = coerce(raw, getattr(base, key))
        except ValueError as e:
            raise ConfigError(f"[{section}] {key}: {e}", line, source) from e
    try:
        return dataclasses.replace(base, **overrides)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {e}", None, source) from e


def _env_number(convert, raw: str, key: str, lines, source):
    try:
        return convert(raw)
    except ValueError as e:
        raise ConfigError(f"[env] {key}: {e}", lines.get(("env", key)), source) from e


def _env_spec(kind: str, values: dict[str, str], lines, source):
    values = dict(values)
    if kind == "matrix":
        game = values.pop("game", "custom" if "payoff" in values else "climbing")
        k = values.pop("k", None)
        length = _env_number(int, values.get("episode_length", "25"), "episode_length",
                             lines, source)
        if game == "climbing":
            base = climbing_spec(length)
        elif game == "penalty":
            if k is None:
                raise ConfigError("penalty game needs k", lines.get(("env", "game")), source)
            base = penalty_spec(_env_number(float, k, "k", lines, source), length)
        elif game == "custom":
            if "payoff" not in values:
                raise ConfigError("custom game needs a payoff grid",
                                  lines.get(("env", "game")), source)
            base = MatrixGameSpec(name="custom")
        else:
            raise ConfigError(f"unknown matrix game {game!r}", lines.get(("env", "game")), source)
        if k is not None and game != "penalty":
            raise ConfigError("k only applies to the penalty game", lines.get(("env", "k")), source)
        return _build(MatrixGameSpec, base, values, "env", lines, source)
    spec_type = ENV_KINDS[kind][0]
    return _build(spec_type, spec_type(), values, "env", lines, source)


def _learner(algorithm: str, env_kind: str, values: dict[str, str], lines, source):
    for key in values:
        if key in _RESERVED_LEARNER_KEYS:
            raise ConfigError(f"{key!r} belongs in [experiment], not [learner]",
                              lines.get(("learner", key)), source)
    cls = _LEARNER_TYPES[algorithm]
    base = default_ppo_config(env_kind) if cls is PPOConfig else cls()
    return _build(cls, base, values, "learner", lines, source)


def _output_dir(raw: str) -> Path:
    path = Path(raw)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root).resolve() / path
    return path


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(str(e).replace("\n", " "), getattr(e, "lineno", None), source) from e
    lines = _key_lines(text)
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", None, source)
    if not parser.has_section("env"):
        raise ConfigError("missing [env] section", None, source)

    exp = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    env = dict(parser["env"])
    learner = dict(parser["learner"]) if parser.has_section("learner") else {}

    kind = env.pop("kind", None)
    if kind not in ENV_KINDS:
        raise ConfigError(f"[env] kind must be one of {sorted(ENV_KINDS)}, got {kind!r}",
                          lines.get(("env", "kind")), source)
    algorithm = exp.pop("algorithm", "optimappo")
    if algorithm not in ALL_ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALL_ALGORITHMS}, got {algorithm!r}",
                          lines.get(("experiment", "algorithm")), source)

    spec = _env_spec(kind, env, lines, source)
    learner_cfg = _learner(algorithm, kind, learner, lines, source)

    defaults = ExperimentConfig()
    fields_ = {f.name for f in dataclasses.fields(ExperimentConfig)}
    fields_ -= {"algorithm", "env_kind", "env_spec", "learner"}
    overrides = {}
    for key, raw in exp.items():
        line = lines.get(("experiment", key))
        if key not in fields_:
            raise ConfigError(f"unknown key {key!r} in [experiment]", line, source)
        try:
            overrides[key] = (_output_dir(raw) if key == "output_dir"
                              else coerce(raw, getattr(defaults, key)))
        except ValueError as e:
            raise ConfigError(f"[experiment] {key}: {e}", line, source) from e
    try:
        return ExperimentConfig(algorithm=algorithm, env_kind=kind, env_spec=spec,
                                learner=learner_cfg, **overrides)
    except ValueError as e:
        raise ConfigError(str(e), None, source) from e


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror or e}", None, str(path)) from e
    return parse_config_text(text, source=str(path))


# ---------- emission --------------------------------------------------------
def _section(obj, skip=()) -> list[str]:
    width = max(len(f.name) for f in dataclasses.fields(obj))
    return [f"{f.name:<{width}} = {render(getattr(obj, f.name))}"
            for f in dataclasses.fields(obj) if f.name not in skip]


def emit_config(cfg: ExperimentConfig) -> str:
    """Fully resolved INI text; ``parse_config_text(emit_config(c)) == c``."""
    out = ["[experiment]"]
    out += [
        f"algorithm     = {cfg.algorithm}",
        f"seeds         = {render(cfg.seeds)}",
        f"iterations    = {cfg.iterations}",
        f"eval_every    = {cfg.eval_every}",
        f"eval_episodes = {cfg.eval_episodes}",
        f"output_dir    = {cfg.output_dir}",
        f"workers       = {cfg.workers}",
        "",
        "[env]",
        f"kind = {cfg.env_kind}",
    ]
    if cfg.env_kind == "matrix":
        out.append("game = custom")
    out += _section(cfg.env_spec)
    out += ["", "[learner]"]
    out += _section(cfg.learner, skip=_RESERVED_LEARNER_KEYS)
    return "\n".join(out) + "\n"
