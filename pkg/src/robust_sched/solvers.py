"""Best responses over uncertainty sets and Euclidean projection onto the chi-square ball.

Both reduce to one-dimensional root finding on dual variables:

* best response over ``{q in simplex : chi2(q, p) <= rho}`` has the form
  ``q(eta)_i ~ p_i (v_i - eta)_+`` and ``eta`` is bisected until the
  divergence constraint is tight;
* the projection has stationary points
  ``q_i = p_i (v_i + lam - eta)_+ / (p_i + lam)``; ``lam >= 0`` is bisected
  for complementary slackness and ``eta`` is the threshold making ``q`` sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CVaR,
    ChiSquare,
    DimensionError,
    FullSimplex,
    GroupWeights,
    Singleton,
    UncertaintySet,
    as_losses,
    chi_square_divergence,
)


class SolverError(RuntimeError):
    """Bisection failed to shrink its bracket below tolerance."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message} (last bracket [{bracket[0]!r}, {bracket[1]!r}])")
        self.bracket = bracket


@dataclass(frozen=True)
class SolverConfig:
    dual_tolerance: float = 1e-10
    max_iterations: int = 200

    def __post_init__(self):
        if not self.dual_tolerance > 0:
            raise ValueError("dual_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True)
class BestResponse:
    q: GroupWeights
    objective: float
    active: bool


def _center_or_uniform(center: GroupWeights | None, n: int) -> np.ndarray:
    if center is None:
        return np.full(n, 1.0 / n)
    if len(center) != n:
        raise DimensionError(f"set has {len(center)} groups, got {n} losses")
    return center.weights


def _bisect(f, lo: float, hi: float, cfg: SolverConfig, what: str) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` around the sign change of an increasing ``f`` (``f(lo) <= 0 < f(hi)``)."""
    for _ in range(cfg.max_iterations):
        if hi - lo <= cfg.dual_tolerance * max(1.0, abs(lo), abs(hi)):
            return lo, hi
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # adjacent floats
            return lo, hi
        if f(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    if hi - lo <= cfg.dual_tolerance * max(1.0, abs(lo), abs(hi)):
        return lo, hi
    raise SolverError(f"{what} did not converge in {cfg.max_iterations} iterations", (lo, hi))


def _argmax_vertex(v: np.ndarray) -> GroupWeights:
    # np.argmax returns the first maximal index
    return GroupWeights.vertex(v.size, int(np.argmax(v)))


def _chi_square_tilt(v: np.ndarray, p: np.ndarray, eta: float) -> np.ndarray:
    w = p * np.maximum(v - eta, 0.0)
    return w / w.sum()


def _ulp_slack(x: float) -> float:
    # closed-form divergences can land a few ulps above the radius they should equal
    return x - 1e-12 * max(1.0, x)


def _chi_square_best_response(v: np.ndarray, p: np.ndarray, rho: float, cfg: SolverConfig) -> BestResponse:
    vmax = v.max()
    if vmax == v.min():
        return BestResponse(GroupWeights(p), float(p @ v), False)

    k = int(np.argmax(v))
    if rho >= _ulp_slack((1.0 - p[k]) / (2.0 * p[k])):  # divergence of the vertex e_k
        return BestResponse(_argmax_vertex(v), float(vmax), False)

    top = v == vmax
    mass = p[top].sum()
    if top.sum() > 1 and rho >= _ulp_slack((1.0 - mass) / (2.0 * mass)):
        q = np.where(top, p, 0.0) / mass
        return BestResponse(GroupWeights(q), float(vmax), False)

    def excess(eta):
        return chi_square_divergence(_chi_square_tilt(v, p, eta), p) - rho

    hi = float(vmax)
    lo = float(v.min()) - 1.0
    # the divergence decays like var/(mean - eta)^2, so tiny rho needs a wide bracket
    for _ in range(cfg.max_iterations):
        if excess(lo) <= 0.0:
            break
        lo = hi - 2.0 * (hi - lo)
    else:
        raise SolverError("could not bracket the chi-square dual variable", (lo, hi))

    lo, hi = _bisect(excess, lo, hi, cfg, "chi-square best response")
    q = _chi_square_tilt(v, p, lo)
    return BestResponse(GroupWeights(q), float(q @ v), True)


def _cvar_best_response(v: np.ndarray, p: np.ndarray, alpha: float) -> BestResponse:
    if alpha == 1.0:
        return BestResponse(GroupWeights(p), float(p @ v), False)
    cap = p / alpha
    q = np.zeros_like(v)
    remaining = 1.0
    for i in np.argsort(-v, kind="stable"):
        take = min(cap[i], remaining)
        q[i] = take
        remaining -= take
        if remaining <= 0.0:
            break
    return BestResponse(GroupWeights(q), float(q @ v), True)


def best_response(v, uset: UncertaintySet, cfg: SolverConfig = DEFAULT_SOLVER) -> BestResponse:
    """Maximize ``q @ v`` over the uncertainty set.

    Sets without a center use the uniform distribution over ``len(v)`` groups.
    A constant ``v`` makes every feasible q optimal; the center is returned.
    """
    v = as_losses(v)
    n = v.size
    if isinstance(uset, Singleton):
        p = _center_or_uniform(uset.center, n)
        return BestResponse(GroupWeights(p), float(p @ v), False)
    if isinstance(uset, FullSimplex):
        return BestResponse(_argmax_vertex(v), float(v.max()), True)
    if isinstance(uset, CVaR):
        return _cvar_best_response(v, _center_or_uniform(uset.center, n), uset.alpha)
    if isinstance(uset, ChiSquare):
        return _chi_square_best_response(v, _center_or_uniform(uset.center, n), uset.rho, cfg)
    raise TypeError(f"unknown uncertainty set {uset!r}")


def _weighted_threshold(a: np.ndarray, w: np.ndarray) -> float:
    """The ``z`` solving ``sum_i w_i (a_i - z)_+ = 1`` for positive ``w``.

    The left side is piecewise linear and decreasing in ``z``; sorting ``a``
    locates the piece holding the root exactly.
    """
    order = np.argsort(-a)
    a_s, w_s = a[order], w[order]
    cw = np.cumsum(w_s)
    z = (np.cumsum(w_s * a_s) - 1.0) / cw
    k = np.nonzero(a_s > z)[0][-1]
    return float(z[k])


def _projection_at(v: np.ndarray, p: np.ndarray, lam: float) -> np.ndarray:
    # with eta = lam + z the stationarity condition reads q_i = p_i (v_i - z)_+ / (p_i + lam),
    # which avoids cancelling lam against eta when lam is large
    w = p / (p + lam)
    z = _weighted_threshold(v, w)
    return w * np.maximum(v - z, 0.0)


def _is_feasible(v: np.ndarray, p: np.ndarray, rho: float) -> bool:
    if v.min() < 0.0 or abs(v.sum() - 1.0) > 1e-12:
        return False
    return chi_square_divergence(v, p) <= rho


def project_chi_square(v, uset: ChiSquare, cfg: SolverConfig = DEFAULT_SOLVER) -> GroupWeights:
    """Euclidean projection of ``v`` onto ``{q in simplex : chi2(q, center) <= rho}``."""
    if not isinstance(uset, ChiSquare):
        raise TypeError("project_chi_square needs a ChiSquare set")
    v = as_losses(v)
    p = _center_or_uniform(uset.center, v.size)
    rho = uset.rho
    if _is_feasible(v, p, rho):
        return GroupWeights(v)

    def excess(lam):
        return rho - chi_square_divergence(_projection_at(v, p, lam), p)

    q0 = _projection_at(v, p, 0.0)
    if chi_square_divergence(q0, p) <= rho:
        return GroupWeights(q0)

    # divergence at the stationary point shrinks as lam grows; excess is increasing
    hi = 1.0
    for _ in range(cfg.max_iterations):
        if excess(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise SolverError("could not bracket the chi-square multiplier", (0.0, hi))
    # _bisect keeps excess(lo) <= 0, i.e. lo infeasible; hi is the feasible end
    _, hi = _bisect(excess, 0.0, hi, cfg, "chi-square projection")
    return GroupWeights(_projection_at(v, p, hi))
