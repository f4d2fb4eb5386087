"""Data-collection (behaviour) policies at three action granularities."""

from __future__ import annotations

import numpy as np

GRANULARITIES = ("continuous", "coarse", "fine")


def discrete_actions(granularity: str, env) -> np.ndarray | None:
    """Finite action set for ``coarse``/``fine``; None for ``continuous``."""
    if granularity == "continuous":
        return None
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown granularity {granularity!r}")
    if env.name == "slot":
        return env.timer_grid(4 if granularity == "coarse" else 16)
    d = float(env.action_high[0])
    if granularity == "coarse":
        angles = np.arange(8) * (2 * np.pi / 8)
        return d * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    angles = np.arange(32) * (2 * np.pi / 32)
    unit = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    mags = d * np.array([0.25, 0.5, 0.75, 1.0])
    return (mags[:, None, None] * unit[None]).reshape(-1, 2)


def snap(actions: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Nearest element of a discrete action set."""
    return actions[int(np.argmin(np.sum((actions - a) ** 2, axis=1)))]


def behavior_policy(granularity: str, env, rng: np.random.Generator):
    """Uniform random policy over the box or over the discrete action set."""
    actions = discrete_actions(granularity, env)
    if actions is None:
        return lambda s: rng.uniform(env.action_low, env.action_high)
    return lambda s: actions[rng.integers(len(actions))]
