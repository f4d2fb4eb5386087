from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Env


@dataclass
class SlotConfig:
    n_reels: int = 3
    symbols_per_reel: int = 8
    n_kinds: int = 4
    spin_rate: float = 4.0
    timer_max: float = 1.0
    triple_payout: tuple[float, ...] = (20.0, 15.0, 10.0, 5.0)
    pair_payout: float = 2.0
    strip_seed: int = 20200101
    gamma: float = 0.99
    max_episode_steps: int = 1
    expose_strips: bool = False


class SlotMachine(Env):
    """Reels of distinct symbols, each symbol belonging to one payout kind.

    The observed state is the one-hot symbol on display per reel. The action is
    one timer per reel; a reel advances ``floor(spin_rate * timer)`` positions.
    Reel strips are hidden; every spin ends the episode.
    """

    name = "slot"
    has_inverse_action = False

    def __init__(self, config: SlotConfig | None = None, seed=0):
        self.cfg = config or SlotConfig()
        c = self.cfg
        if c.symbols_per_reel % c.n_kinds:
            raise ValueError("symbols_per_reel must be a multiple of n_kinds")
        if len(c.triple_payout) != c.n_kinds:
            raise ValueError("one triple payout per symbol kind required")
        strip_rng = np.random.default_rng(c.strip_seed)
        self._strips = np.stack([strip_rng.permutation(c.symbols_per_reel) for _ in range(c.n_reels)])
        self._position = np.argsort(self._strips, axis=1)  # symbol id -> strip index
        self.state_width = c.n_reels * c.symbols_per_reel
        self.action_width = c.n_reels
        self.action_low = np.zeros(c.n_reels)
        self.action_high = np.full(c.n_reels, c.timer_max)
        self.state_low = np.zeros(self.state_width)
        self.state_high = np.ones(self.state_width)
        self.gamma = c.gamma
        self.max_episode_steps = c.max_episode_steps
        self.rng = np.random.default_rng(seed)
        self.offsets = self.rng.integers(0, c.symbols_per_reel, size=c.n_reels)

    def reel_strips(self) -> np.ndarray:
        if not self.cfg.expose_strips:
            raise PermissionError("reel strips are hidden; construct with expose_strips=True in tests")
        return self._strips.copy()

    def kind(self, symbol):
        return np.asarray(symbol) // (self.cfg.symbols_per_reel // self.cfg.n_kinds)

    def payout(self, symbols: np.ndarray) -> np.ndarray:
        """Payout for (B, n_reels) displayed symbol ids."""
        c = self.cfg
        kinds = self.kind(symbols)
        triple = np.all(kinds == kinds[:, :1], axis=1)
        table = np.asarray(c.triple_payout)
        same_pairs = sum((kinds[:, i] == kinds[:, j]).astype(int)
                         for i in range(c.n_reels) for j in range(i + 1, c.n_reels))
        two = ~triple & (same_pairs >= 1)
        return np.where(triple, table[kinds[:, 0]], np.where(two, c.pair_payout, 0.0))

    def encode(self, symbols: np.ndarray) -> np.ndarray:
        symbols = np.atleast_2d(symbols)
        c = self.cfg
        out = np.zeros((len(symbols), c.n_reels, c.symbols_per_reel))
        rows = np.arange(len(symbols))[:, None]
        out[rows, np.arange(c.n_reels)[None], symbols] = 1.0
        return out.reshape(len(symbols), -1)

    def decode(self, s: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(s)
        c = self.cfg
        return np.argmax(s.reshape(len(s), c.n_reels, c.symbols_per_reel), axis=2)

    def advance(self, timers: np.ndarray) -> np.ndarray:
        timers = np.clip(timers, self.action_low, self.action_high)
        return np.floor(self.cfg.spin_rate * timers + 1e-12).astype(int)

    def transition(self, s: np.ndarray, a: np.ndarray):
        """Batched pure dynamics given the (fixed) hidden strips."""
        c = self.cfg
        symbols = self.decode(s)
        reels = np.arange(c.n_reels)[None]
        pos = self._position[reels, symbols]
        new_pos = (pos + self.advance(a)) % c.symbols_per_reel
        new_symbols = self._strips[reels, new_pos]
        r = self.payout(new_symbols)
        return self.encode(new_symbols), r, np.ones(len(s), dtype=bool)

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.offsets = self.rng.integers(0, self.cfg.symbols_per_reel, size=self.cfg.n_reels)
        return self.observe()

    def observe(self) -> np.ndarray:
        return self.encode(self._strips[np.arange(self.cfg.n_reels), self.offsets])[0]

    def step(self, a):
        c = self.cfg
        self.last_action = self.clip_action(a)
        self.offsets = (self.offsets + self.advance(self.last_action)) % c.symbols_per_reel
        symbols = self._strips[np.arange(c.n_reels), self.offsets][None]
        return self.encode(symbols)[0], float(self.payout(symbols)[0]), True

    def timer_grid(self, levels: int) -> np.ndarray:
        """All per-reel combinations of ``levels`` evenly spaced timers, (levels**n_reels, n_reels)."""
        t = (np.arange(levels) + 0.5) / levels * self.cfg.timer_max
        mesh = np.meshgrid(*([t] * self.cfg.n_reels), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def feasible_candidates(self, s, n: int) -> np.ndarray:
        levels = max(1, int(round(n ** (1.0 / self.cfg.n_reels))))
        while levels ** self.cfg.n_reels > n and levels > 1:
            levels -= 1
        grid = self.timer_grid(levels)
        s = np.asarray(s, dtype=np.float64)
        return self.transition(np.repeat(s[None], len(grid), axis=0), grid)[0]

    def inverse_action(self, s, s_next):
        return None
