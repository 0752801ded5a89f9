"""EMA loss tracking and per-epoch resampling plans."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import as_weights


@dataclass
class LossTracker:
    """Exponential moving averages of observed per-example losses, one per group."""

    ema: np.ndarray
    lam: float
    counts: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"EMA coefficient must lie in (0, 1], got {self.lam}")
        self.ema = np.array(self.ema, dtype=float)
        self.counts = np.array(self.counts, dtype=np.int64)
        if not np.all(np.isfinite(self.ema)):
            raise ValueError("EMA values must be finite")

    @classmethod
    def zeros(cls, n: int, lam: float = 0.1) -> "LossTracker":
        return cls(np.zeros(n), lam, np.zeros(n, dtype=np.int64))

    def observe(self, group: int, loss: float) -> None:
        """In-place update; the training loops call this once per example."""
        self.ema[group] = self.lam * loss + (1.0 - self.lam) * self.ema[group]
        self.counts[group] += 1

    def copy(self) -> "LossTracker":
        return LossTracker(self.ema.copy(), self.lam, self.counts.copy())


def ema_update(tracker: LossTracker, group: int, observed_loss: float) -> LossTracker:
    """Return a new tracker with ``observed_loss`` folded into ``group``'s average."""
    if not 0 <= group < tracker.ema.size:
        raise IndexError(f"group {group} out of range for {tracker.ema.size} groups")
    if not math.isfinite(observed_loss):
        raise ValueError(f"non-finite loss {observed_loss!r} for group {group}")
    out = tracker.copy()
    out.observe(group, observed_loss)
    return out


@dataclass(frozen=True)
class ResamplePlan:
    counts: tuple[int, ...]
    target_total: int
    with_replacement: tuple[bool, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)


def make_resample_plan(q, group_sizes, target_total: int) -> ResamplePlan:
    """Per-group draw counts ``ceil(target_total * q_i)`` for one epoch.

    Groups asked for more examples than they hold are drawn with replacement.
    """
    q = as_weights(q).weights
    sizes = [int(s) for s in group_sizes]
    if len(sizes) != q.size:
        raise ValueError(f"{len(sizes)} group sizes for {q.size} weights")
    if min(sizes) < 1:
        raise ValueError("group sizes must be positive")
    if target_total < q.size:
        raise ValueError(f"target_total {target_total} is below the group count {q.size}")
    counts = []
    for qi in q.tolist():
        x = target_total * qi
        # products like 100 * 0.3 land a hair above the integer they represent
        c = math.ceil(x - 1e-9 * max(1.0, x))
        counts.append(max(c, 1) if qi > 0 else 0)
    replace = tuple(c > s for c, s in zip(counts, sizes))
    return ResamplePlan(tuple(counts), int(target_total), replace)
