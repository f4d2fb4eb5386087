from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Env
from .geometry import disc_pattern, limit_norm, segment_hits_disc


@dataclass
class GridConfig:
    side_length: float = 1.0
    move_limit: float = 0.15
    mine_pos: tuple[float, float] = (0.5, 0.5)
    exit_pos: tuple[float, float] = (0.85, 0.85)
    mine_radius: float = 0.1
    exit_radius: float = 0.1
    mine_reward: float = -10.0
    exit_reward: float = 10.0
    time_penalty: float = -0.1
    gamma: float = 0.99
    max_episode_steps: int = 200


class GridWorldExit(Env):
    """Continuous arena: avoid the mine disc, reach the exit disc.

    State is the agent position. An action is a displacement whose norm is
    capped at ``move_limit``; the path is the straight segment to the clamped
    end point, and the mine is tested along it before the exit.
    """

    name = "gridworld"
    has_inverse_action = True

    def __init__(self, config: GridConfig | None = None, seed=0):
        self.cfg = config or GridConfig()
        c = self.cfg
        self.state_width = 2
        self.action_width = 2
        self.action_low = np.full(2, -c.move_limit)
        self.action_high = np.full(2, c.move_limit)
        self.state_low = np.zeros(2)
        self.state_high = np.full(2, c.side_length)
        self.gamma = c.gamma
        self.max_episode_steps = c.max_episode_steps
        self.mine_pos = np.asarray(c.mine_pos, dtype=np.float64)
        self.exit_pos = np.asarray(c.exit_pos, dtype=np.float64)
        if np.linalg.norm(self.mine_pos - self.exit_pos) <= c.mine_radius + c.exit_radius:
            raise ValueError("mine and exit regions overlap")
        self.rng = np.random.default_rng(seed)
        self.state = self._random_start()

    def _random_start(self) -> np.ndarray:
        c = self.cfg
        while True:
            p = self.rng.uniform(0.0, c.side_length, size=2)
            if (np.linalg.norm(p - self.mine_pos) > c.mine_radius
                    and np.linalg.norm(p - self.exit_pos) > c.exit_radius):
                return p

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.state = self._random_start()
        return self.state.copy()

    def transition(self, s: np.ndarray, a: np.ndarray):
        """Batched pure dynamics: (B,2) states, (B,2) actions -> (s', r, done)."""
        c = self.cfg
        a = limit_norm(np.clip(a, self.action_low, self.action_high), c.move_limit)
        s_next = np.clip(s + a, 0.0, c.side_length)
        return (s_next, *self.reward(s, s_next))

    def reward(self, s: np.ndarray, s_next: np.ndarray):
        c = self.cfg
        mine = segment_hits_disc(s, s_next, self.mine_pos, c.mine_radius)
        exit_ = ~mine & segment_hits_disc(s, s_next, self.exit_pos, c.exit_radius)
        r = c.time_penalty + np.where(mine, c.mine_reward, 0.0) + np.where(exit_, c.exit_reward, 0.0)
        return r, mine | exit_

    @staticmethod
    def agent_xy(s):
        return s

    def step(self, a):
        s_next, r, done = self.transition(self.state[None], np.asarray(a, dtype=np.float64)[None])
        self.last_action = self.agent_xy(s_next[0]) - self.agent_xy(self.state)
        self.state = s_next[0]
        return self.state.copy(), float(r[0]), bool(done[0])

    def feasible_candidates(self, s, n: int) -> np.ndarray:
        offsets = disc_pattern(n, self.cfg.move_limit)
        s = np.asarray(s, dtype=np.float64)
        return np.clip(s + offsets, 0.0, self.cfg.side_length)

    def inverse_action(self, s, s_next):
        a = np.asarray(s_next, dtype=np.float64) - np.asarray(s, dtype=np.float64)
        if np.linalg.norm(a) > self.cfg.move_limit * (1 + 1e-9):
            return None
        return a
