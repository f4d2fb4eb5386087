from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Env
from .geometry import (disc_pattern, limit_norm, ray_disc_distance, ray_segment_distance,
                       segment_hits_disc)

DEAD = -1.0  # both coordinates of a killed robot
WALL_MARGIN = 1e-6


def _default_walls():
    return [((0.0, 0.5), (0.35, 0.5)), ((0.6, 0.3), (0.6, 0.75))]


def _default_patrols():
    return [
        [(0.1, 0.1), (0.4, 0.1), (0.4, 0.35), (0.1, 0.35)],
        [(0.7, 0.1), (0.9, 0.1), (0.9, 0.4), (0.7, 0.4)],
        [(0.15, 0.6), (0.45, 0.6), (0.45, 0.85), (0.15, 0.85)],
    ]


@dataclass
class BerzerkConfig:
    side_length: float = 1.0
    move_limit: float = 0.15
    walls: list = field(default_factory=_default_walls)
    patrols: list = field(default_factory=_default_patrols)
    robot_speed: float = 0.05
    robot_radius: float = 0.05
    exit_pos: tuple[float, float] = (0.9, 0.9)
    exit_radius: float = 0.1
    kill_reward: float = 5.0
    death_reward: float = -10.0
    exit_reward: float = 10.0
    time_penalty: float = -0.1
    gamma: float = 0.99
    max_episode_steps: int = 200


class _Loop:
    """Closed patrol polygon; robots travel it in waypoint order."""

    def __init__(self, waypoints):
        self.p = np.asarray(waypoints, dtype=np.float64)
        self.d = np.roll(self.p, -1, axis=0) - self.p
        self.len = np.linalg.norm(self.d, axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(self.len)[:-1]])
        self.perimeter = float(self.len.sum())

    def arc(self, q: np.ndarray) -> np.ndarray:
        rel = q[:, None, :] - self.p[None]
        t = np.clip(np.sum(rel * self.d[None], axis=2) / (self.len ** 2)[None], 0.0, 1.0)
        closest = self.p[None] + t[..., None] * self.d[None]
        seg = np.argmin(np.sum((q[:, None, :] - closest) ** 2, axis=2), axis=1)
        rows = np.arange(len(q))
        return self.cum[seg] + t[rows, seg] * self.len[seg]

    def point(self, arc: np.ndarray) -> np.ndarray:
        arc = np.mod(arc, self.perimeter)
        seg = np.clip(np.searchsorted(self.cum, arc, side="right") - 1, 0, len(self.p) - 1)
        frac = (arc - self.cum[seg]) / self.len[seg]
        return self.p[seg] + frac[:, None] * self.d[seg]


class BerzerkWorld(Env):
    """Arena with walls, patrolling robots and one exit.

    State: agent (2), each robot (2; killed robots sit at (-1, -1)), exit (2).
    Each step the agent moves (stopping at walls). Ending the move inside a
    robot's disc is fatal; otherwise it fires one instantaneous bullet along its
    direction of travel. Then the robots advance.
    """

    name = "berzerk"
    has_inverse_action = True

    def __init__(self, config: BerzerkConfig | None = None, seed=0):
        self.cfg = config or BerzerkConfig()
        c = self.cfg
        self.loops = [_Loop(w) for w in c.patrols]
        self.n_robots = len(self.loops)
        self.walls = [(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)) for a, b in c.walls]
        self.exit_pos = np.asarray(c.exit_pos, dtype=np.float64)
        self.state_width = 2 + 2 * self.n_robots + 2
        self.action_width = 2
        self.action_low = np.full(2, -c.move_limit)
        self.action_high = np.full(2, c.move_limit)
        L = c.side_length
        self.state_low = np.concatenate([[0.0, 0.0], np.full(2 * self.n_robots, DEAD), [0.0, 0.0]])
        self.state_high = np.full(self.state_width, L)
        self.gamma = c.gamma
        self.max_episode_steps = c.max_episode_steps
        self.rng = np.random.default_rng(seed)
        self.state = self._random_start()

    # state layout helpers
    def agent(self, s):
        return s[..., 0:2]

    def robots(self, s):
        return s[..., 2:2 + 2 * self.n_robots].reshape(*s.shape[:-1], self.n_robots, 2)

    def alive(self, s):
        return ~np.all(self.robots(s) == DEAD, axis=-1)

    def _random_start(self) -> np.ndarray:
        c = self.cfg
        robots = np.array([lp.point(np.array([self.rng.uniform(0, lp.perimeter)]))[0] for lp in self.loops])
        while True:
            p = self.rng.uniform(0.0, c.side_length, size=2)
            if np.linalg.norm(p - self.exit_pos) <= c.exit_radius:
                continue
            if np.any(np.linalg.norm(robots - p, axis=1) < 3 * c.robot_radius):
                continue
            if any(self._point_segment_dist(p, a, b) < 1e-3 for a, b in self.walls):
                continue
            return np.concatenate([p, robots.ravel(), self.exit_pos])

    @staticmethod
    def _point_segment_dist(p, a, b) -> float:
        d = b - a
        t = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
        return float(np.linalg.norm(p - (a + t * d)))

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.state = self._random_start()
        return self.state.copy()

    def _move(self, p: np.ndarray, a: np.ndarray) -> np.ndarray:
        c = self.cfg
        a = limit_norm(np.clip(a, self.action_low, self.action_high), c.move_limit)
        target = np.clip(p + a, 0.0, c.side_length)
        delta = target - p
        length = np.linalg.norm(delta, axis=1)
        moving = length > 0
        unit = np.where(moving[:, None], delta / np.where(moving, length, 1.0)[:, None], 0.0)
        travel = length.copy()
        for q0, q1 in self.walls:
            hit = ray_segment_distance(p, unit, q0, q1)
            travel = np.where(moving & (hit <= length), np.minimum(travel, np.maximum(hit - WALL_MARGIN, 0.0)), travel)
        return np.clip(p + unit * travel[:, None], 0.0, c.side_length)

    def _advance_robots(self, robots: np.ndarray, alive: np.ndarray) -> np.ndarray:
        out = robots.copy()
        for j, lp in enumerate(self.loops):
            idx = np.flatnonzero(alive[:, j])
            if idx.size:
                out[idx, j] = lp.point(lp.arc(robots[idx, j]) + self.cfg.robot_speed)
        return out

    def transition(self, s: np.ndarray, a: np.ndarray):
        """Batched pure dynamics: (B, D) states, (B, 2) actions -> (s', r, done)."""
        c = self.cfg
        p = self.agent(s)
        p_new = self._move(p, a)
        delta = p_new - p
        length = np.linalg.norm(delta, axis=1)
        robots = self.robots(s)
        alive = self.alive(s)
        # walking into a robot is fatal before any shot resolves
        contact = np.any(alive & (np.linalg.norm(robots - p_new[:, None, :], axis=2) < c.robot_radius), axis=1)
        fired = (length > 1e-12) & ~contact
        unit = np.where(fired[:, None], delta / np.where(fired, length, 1.0)[:, None], 0.0)

        wall_t = np.full(len(s), np.inf)
        for q0, q1 in self.walls:
            wall_t = np.minimum(wall_t, ray_segment_distance(p_new, unit, q0, q1))
        robot_t = np.stack([ray_disc_distance(p_new, unit, robots[:, j], c.robot_radius)
                            for j in range(self.n_robots)], axis=1)
        robot_t = np.where(alive & fired[:, None], robot_t, np.inf)
        first = np.argmin(robot_t, axis=1)
        rows = np.arange(len(s))
        killed = np.isfinite(robot_t[rows, first]) & (robot_t[rows, first] < wall_t)
        alive_after = alive.copy()
        alive_after[rows[killed], first[killed]] = False

        robots_next = self._advance_robots(robots, alive_after)
        robots_next[~alive_after] = DEAD
        s_next = np.concatenate([p_new, robots_next.reshape(len(s), -1), s[:, -2:]], axis=1)
        return (s_next, *self.reward(s, s_next))

    def reward(self, s: np.ndarray, s_next: np.ndarray):
        c = self.cfg
        kills = np.sum(self.alive(s) & ~self.alive(s_next), axis=1)
        p_new = self.agent(s_next)
        gap = np.linalg.norm(self.robots(s_next) - p_new[:, None, :], axis=2)
        gap_before = np.linalg.norm(self.robots(s) - p_new[:, None, :], axis=2)
        death = (np.any(self.alive(s_next) & (gap < c.robot_radius), axis=1)
                 | np.any(self.alive(s) & (gap_before < c.robot_radius), axis=1))
        exit_ = ~death & segment_hits_disc(self.agent(s), p_new, self.exit_pos, c.exit_radius)
        r = (c.time_penalty + c.kill_reward * kills
             + np.where(death, c.death_reward, 0.0) + np.where(exit_, c.exit_reward, 0.0))
        return r, death | exit_

    def agent_xy(self, s):
        return s[0:2]

    def step(self, a):
        s_next, r, done = self.transition(self.state[None], np.asarray(a, dtype=np.float64)[None])
        self.last_action = self.agent_xy(s_next[0]) - self.agent_xy(self.state)
        self.state = s_next[0]
        return self.state.copy(), float(r[0]), bool(done[0])

    def feasible_candidates(self, s, n: int) -> np.ndarray:
        offsets = disc_pattern(n, self.cfg.move_limit)
        s = np.asarray(s, dtype=np.float64)
        return self.transition(np.repeat(s[None], len(offsets), axis=0), offsets)[0]

    def inverse_action(self, s, s_next):
        a = self.agent(np.asarray(s_next, dtype=np.float64)) - self.agent(np.asarray(s, dtype=np.float64))
        if np.linalg.norm(a) > self.cfg.move_limit * (1 + 1e-9):
            return None
        return a
