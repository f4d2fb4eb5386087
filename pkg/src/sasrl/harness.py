"""Experiment runner: configs, multi-seed runs, aggregation and comparison reports."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agent import SasrlConfig
from .behavior import GRANULARITIES, behavior_policy
from .core import write_trajectory_log
from .curve import CurveAlignmentError, LearningCurve, aggregate
from .envs import ENVIRONMENTS, make_env
from .nn import save_snapshot
from .probe import (DEFAULT_ACTION_BINS, DEFAULT_STATE_BINS, DEFAULT_SUPPORT, Discretizer, NotEnoughData,
                    OccupancyStats, accumulate, estimate_k, predict_speedup_regime, write_histogram)
from .training import DivergenceError, run_training

log = logging.getLogger(__name__)

ALGOS = ("sasrl", "ddpg")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    algo: str = "sasrl"
    env: str = "gridworld"
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    max_gradient_steps: int = 20_000
    eval_interval: int = 500
    eval_episodes: int = 10
    granularity: str = "continuous"
    workers: int = 1
    out_dir: str = "runs"
    run_name: str = ""
    train_transition_model: bool = False
    probe_state_bins: int = DEFAULT_STATE_BINS
    probe_action_bins: int = DEFAULT_ACTION_BINS
    agent: dict = field(default_factory=dict)
    env_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"env must be one of {sorted(ENVIRONMENTS)}, got {self.env!r}")
        if self.granularity not in GRANULARITIES:
            raise ConfigError(f"granularity must be one of {GRANULARITIES}")
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be a non-empty list of distinct integers")
        for name in ("eval_interval", "eval_episodes", "workers", "probe_state_bins", "probe_action_bins"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.max_gradient_steps < 0:
            raise ConfigError("max_gradient_steps must be non-negative")
        try:
            self.agent_config()
            make_env(self.env, **self.env_overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def name(self) -> str:
        return self.run_name or f"{self.algo}_{self.env}_{self.granularity}"

    def agent_config(self) -> SasrlConfig:
        return SasrlConfig(**{**self.agent, "max_iterations": self.max_gradient_steps,
                              "eval_interval": self.eval_interval, "eval_episodes": self.eval_episodes,
                              "granularity": self.granularity})

    def run_id(self, seed: int) -> str:
        return f"{self.algo}_{self.env}_seed{seed}"

    def to_lines(self) -> list[str]:
        lines = [f"algo={self.algo}", f"env={self.env}", f"seeds={','.join(map(str, self.seeds))}",
                 f"max_gradient_steps={self.max_gradient_steps}", f"eval_interval={self.eval_interval}",
                 f"eval_episodes={self.eval_episodes}", f"granularity={self.granularity}",
                 f"workers={self.workers}", f"out_dir={self.out_dir}", f"run_name={self.run_name}",
                 f"train_transition_model={str(self.train_transition_model).lower()}",
                 f"probe_state_bins={self.probe_state_bins}", f"probe_action_bins={self.probe_action_bins}"]
        lines += [f"agent.{k}={_format_value(v)}" for k, v in sorted(self.agent.items())]
        lines += [f"env.{k}={_format_value(v)}" for k, v in sorted(self.env_overrides.items())]
        return lines


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return json.dumps(v)
    if isinstance(v, bool):
        return str(v).lower()
    return repr(v) if isinstance(v, float) else str(v)


def _parse_value(text: str, target_type):
    text = text.strip()
    if target_type is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    if target_type is str:
        return text
    if text.startswith(("[", "(")):
        return json.loads(text.replace("(", "[").replace(")", "]"))
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text.lower() in ("none", "null"):
        return None
    return text


def _field_type(cls, name):
    hints = {"int": int, "float": float, "str": str, "bool": bool}
    for f in dataclasses.fields(cls):
        if f.name == name:
            t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
            return hints.get(t)
    raise KeyError(name)


def read_config_file(path) -> dict[str, str]:
    """Flat ``key=value`` lines, ``#`` comments, UTF-8."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


def build_config(values: dict[str, str]) -> RunConfig:
    """RunConfig from string key/values; bare agent keys and ``agent.``/``env.`` prefixes accepted."""
    top = {f.name for f in dataclasses.fields(RunConfig)} - {"agent", "env_overrides"}
    agent_fields = {f.name for f in dataclasses.fields(SasrlConfig)}
    kwargs, agent, env_over = {}, {}, {}
    env_name = values.get("env", RunConfig.env)
    env_cfg_cls = ENVIRONMENTS.get(env_name, (None, None))[1]
    try:
        for key, value in values.items():
            if key == "seeds":
                kwargs["seeds"] = [int(s) for s in value.replace(" ", "").split(",") if s]
            elif key in top:
                kwargs[key] = _parse_value(value, _field_type(RunConfig, key))
            elif key.startswith("env."):
                name = key[4:]
                if env_cfg_cls is None or name not in {f.name for f in dataclasses.fields(env_cfg_cls)}:
                    raise ConfigError(f"unknown environment setting {key!r}")
                env_over[name] = _parse_value(value, _field_type(env_cfg_cls, name))
            else:
                name = key[6:] if key.startswith("agent.") else key
                if name not in agent_fields or name in ("max_iterations", "eval_interval", "eval_episodes",
                                                        "granularity"):
                    raise ConfigError(f"unknown configuration key {key!r}")
                agent[name] = _parse_value(value, _field_type(SasrlConfig, name))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return RunConfig(**kwargs, agent=agent, env_overrides=env_over)


def load_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    return build_config(values)


def code_version() -> str:
    return f"sasrl {__version__}"


def _run_seed(args):
    config, seed, out = args
    run_id = config.run_id(seed)
    try:
        result = run_training(config.algo, config.env, config.agent_config(), seed, config.env_overrides)
    except DivergenceError as exc:
        (out / f"{run_id}.diverged.json").write_text(json.dumps(exc.bundle, indent=2, default=str) + "\n")
        return seed, None, str(exc)
    result.curve.to_csv(out / f"seed{seed}.csv")
    for name, net in result.checkpoints.items():
        save_snapshot(net, out / f"{run_id}.{name}")
    write_trajectory_log(out / f"{run_id}.traj", result.buffer.contents())
    if config.train_transition_model and "tmodel" not in result.checkpoints:
        from .transition import TransitionModel, fit
        env = make_env(config.env, **config.env_overrides)
        cfg = config.agent_config()
        rng = np.random.default_rng(seed)
        model = TransitionModel.for_env(env, rng, hidden=cfg.hidden)
        fit(model, result.buffer, cfg.tmodel_epochs, cfg.tmodel_batch, rng)
        save_snapshot(model.net, out / f"{run_id}.tmodel")
    return seed, result.prefill_samples, None


def probe_report(config: RunConfig, samples_by_seed: list, out: Path) -> str:
    env = make_env(config.env, **config.env_overrides)
    disc = Discretizer.for_env(env, config.probe_state_bins, config.probe_action_bins)
    stats = OccupancyStats()
    for samples in samples_by_seed:
        shard = OccupancyStats()
        accumulate(shard, samples, disc)
        stats = stats.merge(shard)
    try:
        r1, r2, k = estimate_k(stats, DEFAULT_SUPPORT)
        line = f"{stats.W} {r1!r} {r2!r} {k!r} {predict_speedup_regime(k)}"
        write_histogram(stats, out / "k_hist.csv")
    except NotEnoughData as exc:
        line = f"{stats.W} nan nan nan insufficient_support  # {exc}"
    (out / "k_probe.txt").write_text(line + "\n", encoding="utf-8")
    return line


def run_experiment(config: RunConfig) -> Path:
    """Train every seed, then write curves, aggregate, checkpoints, k-probe and manifest."""
    out = Path(config.out_dir) / config.name
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.cfg").write_text(
        f"# {code_version()}\n" + "\n".join(config.to_lines()) + "\n", encoding="utf-8")
    jobs = [(config, seed, out) for seed in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with multiprocessing.get_context("spawn").Pool(min(config.workers, len(jobs))) as pool:
            results = pool.map(_run_seed, jobs)
    else:
        results = [_run_seed(j) for j in jobs]

    failures = {seed: err for seed, _, err in results if err}
    survivors = [seed for seed, _, err in results if not err]
    if failures:
        log.warning("diverged seeds %s; aggregating over %d survivors", sorted(failures), len(survivors))
        (out / "failures.json").write_text(json.dumps({str(k): v for k, v in failures.items()}, indent=2) + "\n")
    if survivors:
        curves = [LearningCurve.from_csv(out / f"seed{s}.csv") for s in survivors]
        try:
            aggregate(curves).to_csv(out / "aggregate.csv")
        except CurveAlignmentError:
            # plateau stops end seeds at different steps; aggregate over the common prefix
            n = min(len(c) for c in curves)
            aggregate([LearningCurve(c.rows[:n]) for c in curves]).to_csv(out / "aggregate.csv")
        probe_report(config, [p for _, p, err in results if not err and p], out)
    return out


def random_policy_return(env_name: str, episodes: int = 10, granularity="continuous", seed=0,
                         env_overrides=None) -> float:
    """Mean undiscounted return of the uniform behaviour policy on the shared evaluation starts."""
    from .training import evaluate
    env = make_env(env_name, seed=seed, **(env_overrides or {}))
    returns, _ = evaluate(env, behavior_policy(granularity, env, np.random.default_rng(seed)), episodes)
    return float(returns.mean())


@dataclass
class RunSummary:
    label: str
    algo: str
    env: str
    plateau: float
    steps_to_plateau: int | None


def _relative(a: float, b: float) -> float:
    """Percent improvement of b over a."""
    if a == b:
        return 0.0
    return (b - a) / abs(a) * 100.0 if a != 0 else math.copysign(math.inf, b - a)


def summarize_curves(labelled: list[tuple[str, str, str, LearningCurve]]):
    """Plateau summaries and pairwise improvements for aligned curves."""
    if not labelled:
        raise ValueError("nothing to compare")
    envs = {env for _, _, env, _ in labelled}
    if len(envs) > 1:
        raise CurveAlignmentError(f"runs use different environments: {sorted(envs)}")
    grid = labelled[0][3].steps
    for label, _, _, c in labelled[1:]:
        if not np.array_equal(c.steps, grid):
            raise CurveAlignmentError(f"{label} was evaluated on a different step grid")
    summaries = [RunSummary(label, algo, env, c.plateau(), c.steps_to_plateau()) for label, algo, env, c in labelled]
    pairs = []
    for i, a in enumerate(summaries):
        for b in summaries[i + 1:]:
            pairs.append((a.label, b.label, _relative(a.plateau, b.plateau)))
    return summaries, pairs


def compare_report(dirs, out_csv=None) -> str:
    labelled = []
    for d in dirs:
        d = Path(d)
        values = read_config_file(d / "manifest.cfg")
        curve = LearningCurve.from_csv(d / "aggregate.csv")
        labelled.append((d.name, values.get("algo", "?"), values.get("env", "?"), curve))
    summaries, pairs = summarize_curves(labelled)
    rows = [("run", "algo", "env", "plateau_mean_return", "steps_to_plateau")]
    rows += [(s.label, s.algo, s.env, f"{s.plateau:.6g}", str(s.steps_to_plateau)) for s in summaries]
    if out_csv:
        import csv
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["baseline", "candidate", "improvement_percent"])
            for a, b, pct in pairs:
                w.writerow([a, b, repr(pct)])
            w.writerow([])
            w.writerows(rows)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    text = "\n".join("  ".join(cell.ljust(wd) for cell, wd in zip(r, widths)) for r in rows)
    if pairs:
        text += "\n\n" + "\n".join(f"{b} vs {a}: {pct:+.1f}%" for a, b, pct in pairs)
    return text
