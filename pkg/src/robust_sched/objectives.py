"""Robust and weighted training objectives over per-group losses."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DimensionError, UncertaintySet, as_losses, as_weights
from .solvers import DEFAULT_SOLVER, SolverConfig, best_response


@dataclass(frozen=True)
class Baselines:
    """Per-group reference losses subtracted before the adversary maximizes.

    ``group_ids`` keeps the order the values were read in so a file can be
    matched against a dataset's group labels.
    """

    b: np.ndarray
    source_tag: str = ""
    group_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        b = as_losses(self.b)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if self.group_ids and len(self.group_ids) != b.size:
            raise DimensionError("one group id per baseline value is required")

    def __len__(self) -> int:
        return self.b.size

    def aligned(self, group_ids: Sequence[str]) -> "Baselines":
        """Reorder to ``group_ids``; every id must be present exactly once."""
        if not self.group_ids:
            if len(group_ids) != self.b.size:
                raise DimensionError(f"{self.b.size} baselines for {len(group_ids)} groups")
            return Baselines(self.b, self.source_tag, tuple(group_ids))
        lookup = dict(zip(self.group_ids, self.b.tolist()))
        missing = [g for g in group_ids if g not in lookup]
        extra = sorted(set(self.group_ids) - set(group_ids))
        if missing or extra:
            raise ValueError(f"baseline groups do not match data: missing {missing}, unexpected {extra}")
        return Baselines(np.array([lookup[g] for g in group_ids]), self.source_tag, tuple(group_ids))


def read_baselines(path: str | Path) -> Baselines:
    """Parse ``group_id<TAB>baseline_loss`` lines."""
    ids, values = [], []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        parts = line.rstrip("\r").split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'group_id<TAB>loss', got {line!r}")
        gid, raw = parts
        if gid in ids:
            raise ValueError(f"{path}:{lineno}: duplicate group id {gid!r}")
        try:
            values.append(float(raw))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: baseline {raw!r} is not a number") from None
        ids.append(gid)
    if not ids:
        raise ValueError(f"{path}: no baselines found")
    return Baselines(np.array(values), source_tag=str(path), group_ids=tuple(ids))


def write_baselines(path: str | Path, group_ids: Sequence[str], values) -> None:
    values = as_losses(values, len(group_ids))
    lines = [f"{gid}\t{val!r}" for gid, val in zip(group_ids, values.tolist())]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def weighted_loss(losses, weights) -> float:
    """Loss of a fixed group mixture, e.g. ERM or temperature-sampled training."""
    w = as_weights(weights).weights
    v = as_losses(losses, w.size)
    return float(w @ v)


def robust_loss(
    losses,
    uset: UncertaintySet,
    baselines: Baselines | None = None,
    cfg: SolverConfig = DEFAULT_SOLVER,
) -> float:
    """Worst-case mixture loss over ``uset``, optionally on baselined losses."""
    v = as_losses(losses)
    if baselines is not None:
        if len(baselines) != v.size:
            raise DimensionError(f"{len(baselines)} baselines for {v.size} groups")
        v = v - baselines.b
    return best_response(v, uset, cfg).objective
