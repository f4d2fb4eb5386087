"""Learning curves: evaluation returns keyed by gradient-step count."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

HEADER = ("gradient_step", "mean_return", "min_return", "max_return")


class CurveAlignmentError(ValueError):
    """Curves being compared were evaluated on different step grids."""


@dataclass
class LearningCurve:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, step: int, returns) -> None:
        returns = np.asarray(returns, dtype=np.float64)
        if returns.size == 0:
            raise ValueError("no evaluation returns")
        self.add_row(step, float(returns.mean()), float(returns.min()), float(returns.max()))

    def add_row(self, step: int, mean: float, lo: float, hi: float) -> None:
        if self.rows and step <= self.rows[-1][0]:
            raise ValueError(f"gradient_step must increase: {step} after {self.rows[-1][0]}")
        if not lo <= mean <= hi:
            # float summation can put the mean one ulp outside a constant series
            mean = min(max(mean, lo), hi)
        self.rows.append((int(step), float(mean), float(lo), float(hi)))

    @property
    def steps(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows], dtype=np.int64)

    @property
    def means(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows], dtype=np.float64)

    def plateau(self, fraction: float = 0.2) -> float:
        """Mean of ``mean_return`` over the final ``fraction`` of rows (at least one)."""
        if not self.rows:
            return math.nan
        k = max(1, int(math.ceil(fraction * len(self.rows))))
        return float(np.mean(self.means[-k:]))

    def steps_to_plateau(self, fraction: float = 0.2, level: float = 0.9) -> int | None:
        """First step whose mean return covers ``level`` of the way from the first row to the plateau."""
        if not self.rows:
            return None
        target = self.plateau(fraction)
        start = self.means[0]
        threshold = start + level * (target - start)
        for step, m in zip(self.steps, self.means):
            if (target >= start and m >= threshold) or (target < start and m <= threshold):
                return int(step)
        return int(self.steps[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            for step, mean, lo, hi in self.rows:
                w.writerow([step, repr(mean), repr(lo), repr(hi)])

    @classmethod
    def from_csv(cls, path) -> "LearningCurve":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            curve = cls()
            for row in reader:
                curve.rows.append((int(row[0]), float(row[1]), float(row[2]), float(row[3])))
        return curve


def aggregate(curves: list[LearningCurve]) -> LearningCurve:
    """Across-instance mean/min/max of each instance's mean return, per step."""
    if not curves:
        raise ValueError("nothing to aggregate")
    grid = curves[0].steps
    for c in curves[1:]:
        if not np.array_equal(c.steps, grid):
            raise CurveAlignmentError("instances were evaluated on different step grids")
    out = LearningCurve()
    if len(grid) == 0:
        return out
    means = np.stack([c.means for c in curves])
    for j, step in enumerate(grid):
        out.append(int(step), means[:, j])
    return out
