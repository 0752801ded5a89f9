"""Learning-rate schedules indexed by global optimizer step (0-based)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class InverseSqrt:
    """Linear warmup to ``peak``, then decay as ``peak * sqrt(warmup / step)``."""

    peak: float
    warmup_steps: int

    def __post_init__(self):
        if not self.peak > 0 or self.warmup_steps < 1:
            raise ValueError("InverseSqrt needs peak > 0 and warmup_steps >= 1")


@dataclass(frozen=True)
class StepDecay:
    """Linear warmup to ``base``, then multiply by ``factor`` every ``decay_every`` steps."""

    base: float
    warmup_steps: int
    decay_every: int
    factor: float

    def __post_init__(self):
        if not self.base > 0 or self.warmup_steps < 0 or self.decay_every < 1:
            raise ValueError("StepDecay needs base > 0, warmup_steps >= 0, decay_every >= 1")
        if not 0 < self.factor < 1:
            raise ValueError("StepDecay factor must lie in (0, 1)")


LrSchedule = Union[InverseSqrt, StepDecay]


def _warmup(peak: float, warmup: int, step: int) -> float:
    # (step + 1) keeps the very first update non-zero; the ramp reaches peak at warmup - 1
    return peak * (step + 1) / warmup


def lr_at(schedule: LrSchedule, step: int) -> float:
    if step < 0:
        raise ValueError("step must be non-negative")
    if isinstance(schedule, InverseSqrt):
        if step < schedule.warmup_steps:
            return _warmup(schedule.peak, schedule.warmup_steps, step)
        return schedule.peak * math.sqrt(schedule.warmup_steps / step)
    if isinstance(schedule, StepDecay):
        if step < schedule.warmup_steps:
            return _warmup(schedule.base, schedule.warmup_steps, step)
        return schedule.base * schedule.factor ** ((step - schedule.warmup_steps) // schedule.decay_every)
    raise TypeError(f"unknown schedule {schedule!r}")
