"""Plug-in estimates of the occupancy ratios R1 (state-action), R2 (state-transition) and k = R2/R1."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import Batch

log = logging.getLogger(__name__)

NEUTRAL_BAND = 0.05
DEFAULT_STATE_BINS = 10
DEFAULT_ACTION_BINS = 8
DEFAULT_SUPPORT = 5


class NotEnoughData(ValueError):
    pass


@dataclass
class Discretizer:
    state_low: np.ndarray
    state_high: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray
    state_bins: np.ndarray
    action_bins: np.ndarray

    def __post_init__(self):
        self.state_low = np.asarray(self.state_low, dtype=np.float64)
        self.state_high = np.asarray(self.state_high, dtype=np.float64)
        self.action_low = np.asarray(self.action_low, dtype=np.float64)
        self.action_high = np.asarray(self.action_high, dtype=np.float64)
        self.state_bins = np.broadcast_to(np.asarray(self.state_bins, dtype=np.int64), self.state_low.shape).copy()
        self.action_bins = np.broadcast_to(np.asarray(self.action_bins, dtype=np.int64), self.action_low.shape).copy()
        if np.any(self.state_bins < 1) or np.any(self.action_bins < 1):
            raise ValueError("bin counts must be positive")

    @classmethod
    def for_env(cls, env, state_bins=DEFAULT_STATE_BINS, action_bins=DEFAULT_ACTION_BINS) -> "Discretizer":
        return cls(env.state_low, env.state_high, env.action_low, env.action_high, state_bins, action_bins)

    @property
    def n_state_cells(self) -> int:
        return int(np.prod(self.state_bins.astype(object)))

    @property
    def n_action_cells(self) -> int:
        return int(np.prod(self.action_bins.astype(object)))

    @staticmethod
    def _cells(x, low, high, bins) -> tuple[np.ndarray, int]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        width = np.where(high > low, high - low, 1.0)
        idx = np.floor((x - low) / width * bins).astype(np.int64)
        # the upper box face belongs to the last cell
        idx = np.where(x == high, bins - 1, idx)
        outside = int(np.count_nonzero((idx < 0) | (idx >= bins)))
        return np.clip(idx, 0, bins - 1), outside

    def state_cells(self, s) -> np.ndarray:
        idx, outside = self._cells(s, self.state_low, self.state_high, self.state_bins)
        if outside:
            log.warning("%d state coordinates outside the box; counted in the boundary cell", outside)
        return idx

    def action_cells(self, a) -> np.ndarray:
        idx, outside = self._cells(a, self.action_low, self.action_high, self.action_bins)
        if outside:
            log.warning("%d action coordinates outside the box; counted in the boundary cell", outside)
        return idx


@dataclass
class OccupancyStats:
    W: int = 0
    nu_sa: Counter = field(default_factory=Counter)
    nu_ss: Counter = field(default_factory=Counter)

    def p_sa(self) -> dict:
        return {k: v / self.W for k, v in self.nu_sa.items()}

    def p_ss(self) -> dict:
        return {k: v / self.W for k, v in self.nu_ss.items()}

    def merge(self, other: "OccupancyStats") -> "OccupancyStats":
        return OccupancyStats(self.W + other.W, self.nu_sa + other.nu_sa, self.nu_ss + other.nu_ss)

    def scaled(self, factor: int) -> "OccupancyStats":
        return OccupancyStats(self.W * factor, Counter({k: v * factor for k, v in self.nu_sa.items()}),
                              Counter({k: v * factor for k, v in self.nu_ss.items()}))


def _count_rows(rows: np.ndarray) -> Counter:
    uniq, counts = np.unique(rows, axis=0, return_counts=True)
    return Counter({tuple(int(v) for v in u): int(c) for u, c in zip(uniq, counts)})


def accumulate(stats: OccupancyStats, samples, disc: Discretizer) -> None:
    """Add ``samples`` (list or Batch) to the (s, a) and (s, s') counts."""
    if isinstance(samples, Batch):
        batch = samples
    else:
        samples = list(samples)
        if not samples:
            return
        batch = Batch.from_samples(samples)
    if len(batch) == 0:
        return
    s = disc.state_cells(batch.s)
    a = disc.action_cells(batch.a)
    s2 = disc.state_cells(batch.s_next)
    stats.nu_sa.update(_count_rows(np.concatenate([s, a], axis=1)))
    stats.nu_ss.update(_count_rows(np.concatenate([s, s2], axis=1)))
    stats.W += len(batch)


def _ratio(counts: Counter, threshold: int, label: str, W: int) -> float:
    supported = [v for v in counts.values() if v >= threshold]
    if not supported:
        raise NotEnoughData(
            f"no {label} cell reached {threshold} visits in W={W} steps; record more transitions "
            f"(roughly {threshold} x number of cells)")
    return min(supported) / max(supported)


def estimate_k(stats: OccupancyStats, support_threshold: int = DEFAULT_SUPPORT) -> tuple[float, float, float]:
    """(R1, R2, k) over cells visited at least ``support_threshold`` times."""
    if stats.W < 1:
        raise NotEnoughData("no transitions recorded")
    r1 = _ratio(stats.nu_sa, support_threshold, "(s,a)", stats.W)
    r2 = _ratio(stats.nu_ss, support_threshold, "(s,s')", stats.W)
    return r1, r2, r2 / r1


def predict_speedup_regime(k: float) -> str:
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    if abs(k - 1.0) <= NEUTRAL_BAND:
        return "neutral"
    return "mMRP_faster" if k > 1.0 else "MDP_faster"


def report_line(stats: OccupancyStats, support_threshold: int = DEFAULT_SUPPORT) -> str:
    r1, r2, k = estimate_k(stats, support_threshold)
    return f"{stats.W} {r1!r} {r2!r} {k!r} {predict_speedup_regime(k)}"


def write_histogram(stats: OccupancyStats, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["map", "cell", "count", "probability"])
        for label, counts in (("sa", stats.nu_sa), ("ss", stats.nu_ss)):
            for cell in sorted(counts):
                w.writerow([label, " ".join(map(str, cell)), counts[cell], repr(counts[cell] / stats.W)])
