"""Transition samples, the replay buffer, the environment contract and rollouts."""

from __future__ import annotations

import abc
from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np


class BufferNotReady(RuntimeError):
    """Raised when sampling from an empty replay buffer."""


class InvalidSample(ValueError):
    pass


@dataclass(frozen=True)
class TransitionSample:
    s: np.ndarray
    s_next: np.ndarray
    a: np.ndarray
    r: float
    done: bool

    def validate(self, state_width: int | None = None, action_width: int | None = None) -> None:
        if self.s.shape != self.s_next.shape:
            raise InvalidSample(f"s {self.s.shape} and s_next {self.s_next.shape} differ in width")
        if state_width is not None and self.s.shape != (state_width,):
            raise InvalidSample(f"state width {self.s.shape} != {state_width}")
        if action_width is not None and self.a.shape != (action_width,):
            raise InvalidSample(f"action width {self.a.shape} != {action_width}")
        for name in ("s", "s_next", "a"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidSample(f"non-finite entries in {name}: {getattr(self, name)}")
        if not np.isfinite(self.r):
            raise InvalidSample(f"non-finite reward {self.r}")


@dataclass
class Batch:
    """Column-stacked view of a list of samples."""
    s: np.ndarray
    s_next: np.ndarray
    a: np.ndarray
    r: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.r)

    def __iter__(self) -> Iterator[TransitionSample]:
        for i in range(len(self)):
            yield TransitionSample(self.s[i], self.s_next[i], self.a[i], float(self.r[i]), bool(self.done[i]))

    @classmethod
    def from_samples(cls, samples) -> "Batch":
        if isinstance(samples, Batch):
            return samples
        samples = list(samples)
        if not samples:
            raise ValueError("empty batch")
        return cls(
            np.array([x.s for x in samples], dtype=np.float64),
            np.array([x.s_next for x in samples], dtype=np.float64),
            np.array([x.a for x in samples], dtype=np.float64),
            np.array([x.r for x in samples], dtype=np.float64),
            np.array([x.done for x in samples], dtype=bool),
        )


class ReplayBuffer:
    """Bounded FIFO of transitions with seeded uniform minibatch draws."""

    def __init__(self, capacity: int, state_width: int, action_width: int, seed=0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_width = state_width
        self.action_width = action_width
        self.rng = np.random.default_rng(seed)
        self._s = np.zeros((capacity, state_width))
        self._s_next = np.zeros((capacity, state_width))
        self._a = np.zeros((capacity, action_width))
        self._r = np.zeros(capacity)
        self._done = np.zeros(capacity, dtype=bool)
        self._head = 0  # next write slot
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, sample: TransitionSample) -> None:
        sample.validate(self.state_width, self.action_width)
        i = self._head
        self._s[i] = sample.s
        self._s_next[i] = sample.s_next
        self._a[i] = sample.a
        self._r[i] = sample.r
        self._done[i] = sample.done
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, samples) -> None:
        for x in samples:
            self.push(x)

    def _ordered_index(self) -> np.ndarray:
        start = (self._head - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def _take(self, idx) -> Batch:
        return Batch(self._s[idx].copy(), self._s_next[idx].copy(), self._a[idx].copy(),
                     self._r[idx].copy(), self._done[idx].copy())

    def contents(self) -> list[TransitionSample]:
        """Samples oldest first."""
        return list(self._take(self._ordered_index()))

    def as_batch(self) -> Batch:
        return self._take(self._ordered_index())

    def sample(self, n: int) -> Batch:
        if self._size == 0:
            raise BufferNotReady("replay buffer is empty")
        if n < 1:
            raise ValueError("minibatch size must be positive")
        idx = self.rng.integers(0, self._size, size=n)
        return self._take(idx)


class Env(abc.ABC):
    """Contract every simulator implements.

    ``step`` is deterministic given the instance's internal RNG state.
    ``state_low``/``state_high`` bound every reachable state vector.
    """

    name: str = "env"
    state_width: int
    action_width: int
    action_low: np.ndarray
    action_high: np.ndarray
    state_low: np.ndarray
    state_high: np.ndarray
    gamma: float = 0.99
    max_episode_steps: int = 200
    has_inverse_action: bool = True
    last_action: np.ndarray | None = None

    @abc.abstractmethod
    def reset(self, seed: int | None = None) -> np.ndarray: ...

    @abc.abstractmethod
    def step(self, a) -> tuple[np.ndarray, float, bool]: ...

    @abc.abstractmethod
    def feasible_candidates(self, s, n: int) -> np.ndarray:
        """(n, state_width) states reachable from ``s`` in one step."""

    @abc.abstractmethod
    def inverse_action(self, s, s_next) -> np.ndarray | None: ...

    def clip_action(self, a) -> np.ndarray:
        return np.clip(np.asarray(a, dtype=np.float64), self.action_low, self.action_high)

    def sample_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.action_low, self.action_high)


Policy = Callable[[np.ndarray], np.ndarray]


def rollout(env: Env, policy: Policy, max_steps: int, rng_seed: int | None = None):
    """Run one episode; returns (samples, undiscounted return).

    Out-of-box actions are clipped to the box. The recorded action is the one the
    environment reports as applied (``last_action``, e.g. the displacement
    actually travelled), falling back to the clipped action.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    s = env.reset(rng_seed)
    samples = []
    total = 0.0
    for _ in range(max_steps):
        a = env.clip_action(policy(s))
        s_next, r, done = env.step(a)
        a = np.asarray(getattr(env, "last_action", a), dtype=np.float64).copy()
        samples.append(TransitionSample(s.copy(), s_next.copy(), a, float(r), bool(done)))
        total += r
        s = s_next
        if done:
            break
    return samples, total


def discounted_return(rewards, gamma: float) -> float:
    g = 0.0
    for r in reversed(list(rewards)):
        g = r + gamma * g
    return g


def _fmt(x) -> str:
    return repr(float(x))


def write_trajectory_log(path, samples) -> None:
    """One sample per line: ``s... | a... | s'... | r | done``."""
    with open(path, "w", encoding="utf-8") as fh:
        for x in samples:
            fh.write(" ".join(_fmt(v) for v in x.s) + " | "
                     + " ".join(_fmt(v) for v in x.a) + " | "
                     + " ".join(_fmt(v) for v in x.s_next) + " | "
                     + _fmt(x.r) + " | " + ("1" if x.done else "0") + "\n")


def read_trajectory_log(path) -> list[TransitionSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = [c.split() for c in line.split("|")]
            if len(cols) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 '|'-separated columns")
            s, a, s_next = (np.array([float(v) for v in c]) for c in cols[:3])
            out.append(TransitionSample(s, s_next, a, float(cols[3][0]), cols[4][0] == "1"))
    return out
