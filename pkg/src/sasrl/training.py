"""Training loop shared by both learners: prefill, update, evaluate, collect."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .behavior import behavior_policy
from .core import ReplayBuffer, TransitionSample, rollout
from .curve import LearningCurve
from .envs import make_env
from .nn import Mlp, NonFiniteError

log = logging.getLogger(__name__)

EVAL_SEED_BASE = 1_000_003  # evaluation start states are shared by every run


class DivergenceError(RuntimeError):
    def __init__(self, message: str, bundle: dict):
        super().__init__(message)
        self.bundle = bundle


@dataclass
class TrainResult:
    curve: LearningCurve
    checkpoints: dict[str, Mlp]
    buffer: ReplayBuffer
    learner: object
    iterations: int
    stop_reason: str
    prefill_samples: list[TransitionSample] = field(default_factory=list)


def make_learner(algo: str, env, config, rng):
    from .agent import SasrlLearner
    from .ddpg import DdpgLearner
    if algo == "sasrl":
        return SasrlLearner(env, config, rng)
    if algo == "ddpg":
        return DdpgLearner(env, config, rng)
    raise ValueError(f"unknown algorithm {algo!r}")


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    init, buf, beh, env, explore = ss.spawn(5)
    return (np.random.default_rng(init), buf, np.random.default_rng(beh),
            int(env.generate_state(1)[0]), np.random.default_rng(explore))


def collect(env, policy, n_steps: int) -> list[TransitionSample]:
    """Whole or truncated episodes until ``n_steps`` samples are gathered."""
    out: list[TransitionSample] = []
    while len(out) < n_steps:
        samples, _ = rollout(env, policy, min(env.max_episode_steps, n_steps - len(out)))
        out.extend(samples)
    return out


def evaluate(env, policy, episodes: int):
    """Greedy episodes from the shared start states; returns (returns, samples)."""
    returns, samples = [], []
    for i in range(episodes):
        ep, ret = rollout(env, policy, env.max_episode_steps, rng_seed=EVAL_SEED_BASE + i)
        returns.append(ret)
        samples.extend(ep)
    return np.array(returns), samples


def run_training(algo: str, env_name: str, config, seed: int, env_overrides: dict | None = None,
                 learner=None) -> TrainResult:
    env_overrides = env_overrides or {}
    init_rng, buffer_seed, beh_rng, env_seed, explore_rng = _streams(seed)
    env = make_env(env_name, seed=env_seed, **env_overrides)
    eval_env = make_env(env_name, seed=env_seed + 1, **env_overrides)
    if learner is None:
        learner = make_learner(algo, env, config, init_rng)
    buffer = ReplayBuffer(config.buffer_capacity, env.state_width, env.action_width, seed=buffer_seed)

    uniform = behavior_policy(config.granularity, env, beh_rng)
    prefill = collect(env, uniform, config.prefill) if config.prefill else []
    buffer.extend(prefill)
    curve = LearningCurve()
    if config.max_iterations == 0:
        return TrainResult(curve, learner.checkpoints(), buffer, learner, 0, "max_iterations", prefill)
    learner.after_prefill(buffer)
    collector = learner.exploring(explore_rng) or uniform

    best, since_best = -math.inf, 0
    stop = "max_iterations"
    it = 0
    last = {}
    try:
        for it in range(1, config.max_iterations + 1):
            last = learner.update(buffer.sample(config.batch_size))
            if it % config.eval_interval:
                continue
            learner.before_evaluate(buffer)
            returns, eval_samples = evaluate(eval_env, learner.greedy, config.eval_episodes)
            curve.append(it, returns)
            buffer.extend(eval_samples)
            if config.collect_steps:
                buffer.extend(collect(env, collector, config.collect_steps))
            log.debug("%s seed %d step %d: return %.3f", algo, seed, it, returns.mean())
            if returns.mean() > best:
                best, since_best = returns.mean(), 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    stop = "plateau"
                    break
    except NonFiniteError as exc:
        bundle = {"algo": algo, "env": env_name, "seed": seed, "iteration": it, "error": str(exc),
                  "last_update": {k: float(v) for k, v in last.items()}, "curve": curve.rows}
        raise DivergenceError(f"{algo} seed {seed} diverged at iteration {it}: {exc}", bundle) from exc
    return TrainResult(curve, learner.checkpoints(), buffer, learner, it, stop, prefill)
