"""Group weight vectors, uncertainty-set descriptions and static sampling distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

SIMPLEX_ATOL = 1e-9
RENORMALIZE_ATOL = 1e-6


class DimensionError(ValueError):
    """Vectors that should describe the same set of groups have different lengths."""


@dataclass(frozen=True, eq=False)
class GroupWeights:
    """A point on the probability simplex over N groups.

    Sums within ``SIMPLEX_ATOL`` of one are kept as-is, sums within
    ``RENORMALIZE_ATOL`` are rescaled, anything else is rejected.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise ValueError("GroupWeights needs at least one group")
        if not np.all(np.isfinite(w)):
            raise ValueError(f"non-finite group weight in {w}")
        if w.min() < -1e-12:
            raise ValueError(f"negative group weight {w.min():.3g}")
        w = np.clip(w, 0.0, None)
        total = w.sum()
        if abs(total - 1.0) > RENORMALIZE_ATOL:
            raise ValueError(f"group weights sum to {total!r}, not 1")
        if abs(total - 1.0) > SIMPLEX_ATOL:
            w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int) -> "GroupWeights":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def vertex(cls, n: int, k: int) -> "GroupWeights":
        w = np.zeros(n)
        w[k] = 1.0
        return cls(w)

    def __len__(self) -> int:
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)

    def __iter__(self):
        return iter(self.weights.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupWeights):
            return NotImplemented
        return self.weights.shape == other.weights.shape and bool(np.all(self.weights == other.weights))

    def __repr__(self) -> str:
        return f"GroupWeights({np.array2string(self.weights, precision=6, separator=', ')})"

    def tolist(self) -> list[float]:
        return self.weights.tolist()


def as_weights(w: GroupWeights | Sequence[float] | np.ndarray) -> GroupWeights:
    return w if isinstance(w, GroupWeights) else GroupWeights(np.asarray(w, dtype=float))


def as_losses(values, n: int | None = None) -> np.ndarray:
    """Validate a per-group loss vector: finite, one-dimensional, optionally of length ``n``."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("empty loss vector")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite group loss in {v}")
    if n is not None and v.size != n:
        raise DimensionError(f"expected {n} group losses, got {v.size}")
    return v


# Uncertainty sets. ``center`` left as None means "the training distribution",
# resolved by whoever knows the group sizes (see ``resolve_center``).


@dataclass(frozen=True)
class Singleton:
    center: GroupWeights | None = None

    def __post_init__(self):
        if self.center is not None:
            object.__setattr__(self, "center", as_weights(self.center))


@dataclass(frozen=True)
class FullSimplex:
    pass


@dataclass(frozen=True)
class CVaR:
    alpha: float
    center: GroupWeights | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"CVaR alpha must lie in (0, 1], got {self.alpha}")
        if self.center is not None:
            object.__setattr__(self, "center", as_weights(self.center))


@dataclass(frozen=True)
class ChiSquare:
    rho: float
    center: GroupWeights | None = None

    def __post_init__(self):
        if not (self.rho > 0.0 and np.isfinite(self.rho)):
            raise ValueError(f"chi-square radius rho must be positive, got {self.rho}")
        if self.center is not None:
            c = as_weights(self.center)
            if c.weights.min() <= 0.0:
                raise ValueError("chi-square center must put positive mass on every group")
            object.__setattr__(self, "center", c)


UncertaintySet = Union[Singleton, FullSimplex, CVaR, ChiSquare]


def set_size(uset: UncertaintySet) -> int | None:
    """Number of groups the set is pinned to, or None when it has no center yet."""
    center = getattr(uset, "center", None)
    return None if center is None else len(center)


def resolve_center(uset: UncertaintySet, p: GroupWeights) -> UncertaintySet:
    """Fill an unset center with ``p``; check an explicit one has the right length."""
    p = as_weights(p)
    if isinstance(uset, FullSimplex):
        return uset
    if uset.center is None:
        if isinstance(uset, Singleton):
            return Singleton(p)
        if isinstance(uset, CVaR):
            return CVaR(uset.alpha, p)
        return ChiSquare(uset.rho, p)
    if len(uset.center) != len(p):
        raise DimensionError(f"set center has {len(uset.center)} groups, data has {len(p)}")
    return uset


def chi_square_divergence(q, p) -> float:
    """Half the p-weighted squared deviation of the likelihood ratio q/p from one."""
    q = np.asarray(q, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(-1)
    if q.size != p.size:
        raise DimensionError(f"q has {q.size} entries, p has {p.size}")
    if np.any(p <= 0.0):
        raise ValueError("reference distribution must be strictly positive")
    return float(0.5 * np.sum((q - p) ** 2 / p))


def temperature_distribution(sizes: Sequence[int], tau: float) -> GroupWeights:
    """Sampling distribution proportional to ``sizes ** (1/tau)``."""
    s = np.asarray(sizes, dtype=float).reshape(-1)
    if s.size == 0 or np.any(s <= 0):
        raise ValueError(f"group sizes must be positive, got {sizes}")
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if tau == 1:
        return GroupWeights(s / s.sum())
    # log-space keeps huge sizes and tiny tau from overflowing
    logits = np.log(s) / tau
    w = np.exp(logits - logits.max())
    return GroupWeights(w / w.sum())


def training_distribution(sizes: Sequence[int]) -> GroupWeights:
    """Size-proportional distribution of the pooled training set."""
    s = np.asarray(sizes, dtype=float).reshape(-1)
    if s.size == 0 or np.any(s <= 0):
        raise ValueError(f"group sizes must be positive, got {sizes}")
    return GroupWeights(s / s.sum())
