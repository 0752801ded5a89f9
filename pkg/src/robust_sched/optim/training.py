"""Min-max training loops: iterated best response, primal-dual, and fixed-mixture ERM."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from ..core import (
    CVaR,
    ChiSquare,
    FullSimplex,
    GroupWeights,
    Singleton,
    UncertaintySet,
    as_weights,
    resolve_center,
    temperature_distribution,
    training_distribution,
)
from ..objectives import Baselines
from ..solvers import DEFAULT_SOLVER, SolverConfig, best_response, project_chi_square
from ..tasks import GroupedDataset, Model
from .schedules import LrSchedule, lr_at
from .tracking import LossTracker, make_resample_plan

log = logging.getLogger(__name__)

TRAJECTORY_HEADER = ("epoch", "step", "group", "q", "ema_loss", "true_group_loss", "lr")


class ConfigError(ValueError):
    """An invalid combination of method, uncertainty set and hyperparameters."""


class TrainingDiverged(FloatingPointError):
    def __init__(self, group: str, step: int, value: float):
        super().__init__(f"non-finite loss {float(value)!r} on group {group!r} at step {step}")
        self.group, self.step, self.value = group, step, value


@dataclass(frozen=True)
class EpochRecord:
    """State at the end of one epoch: ``q`` is the distribution the epoch trained on."""

    epoch: int
    step: int
    q: np.ndarray
    ema: np.ndarray
    true_losses: np.ndarray
    lr: float


@dataclass
class TrainResult:
    theta: np.ndarray
    trajectory: list[EpochRecord]
    labels: tuple[str, ...]
    p_train: GroupWeights
    final_q: GroupWeights
    uset: UncertaintySet | None = None
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SampleFromQ:
    pass


@dataclass(frozen=True)
class ImportanceWeight:
    p0: GroupWeights

    def __post_init__(self):
        p0 = as_weights(self.p0)
        if p0.weights.min() <= 0:
            raise ValueError("importance-weighting proposal must be strictly positive")
        object.__setattr__(self, "p0", p0)


GradientMode = Union[SampleFromQ, ImportanceWeight]


def _baseline_vector(baselines: Baselines | None, data: GroupedDataset) -> np.ndarray:
    if baselines is None:
        return np.zeros(data.n_groups)
    return baselines.aligned(data.labels).b


def _draw_epoch(q: np.ndarray, data: GroupedDataset, target_total: int, rng: np.random.Generator):
    plan = make_resample_plan(q, data.sizes, target_total)
    groups, rows = [], []
    for g, (count, size, replace) in enumerate(zip(plan.counts, data.sizes, plan.with_replacement)):
        if count == 0:
            continue
        idx = rng.integers(0, size, count) if replace else rng.permutation(size)[:count]
        groups.append(np.full(count, g))
        rows.append(idx)
    groups, rows = np.concatenate(groups), np.concatenate(rows)
    order = rng.permutation(groups.size)
    return plan, groups[order], rows[order]


def _check_theta(theta: np.ndarray, label: str, step: int) -> None:
    if not np.all(np.isfinite(theta)):
        raise TrainingDiverged(label, step, float("nan"))


def _epoch_loop(
    data: GroupedDataset,
    model: Model,
    q0: np.ndarray,
    next_q: Callable[[np.ndarray], np.ndarray],
    schedule: LrSchedule,
    epochs: int,
    ema_lambda: float,
    seed: int,
    target_total: int | None,
    warm_start: bool,
    theta0: np.ndarray | None,
):
    if epochs < 1:
        raise ConfigError("epochs must be positive")
    rng = np.random.default_rng(seed)
    theta = model.init_theta(seed) if theta0 is None else np.array(theta0, dtype=float)
    total = sum(data.sizes) if target_total is None else int(target_total)
    tracker = LossTracker.zeros(data.n_groups, ema_lambda)
    if warm_start:
        tracker.ema[:] = model.group_losses(theta, data)
    feats, targets, labels = data.features, data.targets, data.labels
    lam = tracker.lam
    ema = tracker.ema
    q = np.array(q0, dtype=float)
    trajectory = []
    step, lr = 0, 0.0
    for epoch in range(epochs):
        plan, groups, rows = _draw_epoch(q, data, total, rng)
        for g, i in zip(groups.tolist(), rows.tolist()):
            lr = lr_at(schedule, step)
            loss, grad = model.loss_grad(theta, feats[g][i], targets[g][i])
            if not math.isfinite(loss):
                raise TrainingDiverged(labels[g], step, loss)
            theta -= lr * grad
            # EMA uses the loss at the pre-update parameters
            ema[g] = lam * loss + (1.0 - lam) * ema[g]
            tracker.counts[g] += 1
            step += 1
        _check_theta(theta, "<all>", step)
        true = model.group_losses(theta, data)
        trajectory.append(EpochRecord(epoch, step, q.copy(), ema.copy(), true, lr))
        log.debug("epoch %d: %d examples, q=%s, ema=%s", epoch, plan.total, np.round(q, 4), np.round(ema, 4))
        q = np.asarray(next_q(ema), dtype=float)
    return theta, trajectory, q, tracker


def ibr_train(
    data: GroupedDataset,
    model: Model,
    uset: UncertaintySet,
    schedule: LrSchedule,
    epochs: int,
    baselines: Baselines | None = None,
    ema_lambda: float = 0.1,
    seed: int = 0,
    cfg: SolverConfig = DEFAULT_SOLVER,
    target_total: int | None = None,
    warm_start: bool = False,
    theta0=None,
) -> TrainResult:
    """Iterated best response.

    Each epoch trains by per-example SGD on a dataset resampled under the
    current q, keeping an EMA of every group's observed losses; afterwards q
    is replaced by the exact best response to the baselined EMA losses.
    Sets with an unset center are centered at the training distribution.
    """
    if isinstance(uset, FullSimplex):
        raise ConfigError(
            "iterated best response over the full simplex would spend every epoch on a single group; "
            "use primal_dual or a chi-square / CVaR set"
        )
    p_train = training_distribution(data.sizes)
    uset = resolve_center(uset, p_train)
    b = _baseline_vector(baselines, data)
    if isinstance(uset, ChiSquare):
        c = uset.center.weights
        if uset.rho >= np.max((1.0 - c) / (2.0 * c)):
            log.warning(
                "rho=%g admits every vertex, so IBR behaves like group DRO and trains each epoch on one group",
                uset.rho,
            )

    def next_q(ema):
        return best_response(ema - b, uset, cfg).q.weights

    theta, trajectory, q, tracker = _epoch_loop(
        data, model, p_train.weights, next_q, schedule, epochs, ema_lambda, seed, target_total, warm_start, theta0
    )
    return TrainResult(theta, trajectory, data.labels, p_train, GroupWeights(q), uset, {"tracker": tracker})


def erm_train(
    data: GroupedDataset,
    model: Model,
    schedule: LrSchedule,
    epochs: int,
    tau: float = 1.0,
    ema_lambda: float = 0.1,
    seed: int = 0,
    target_total: int | None = None,
    theta0=None,
) -> TrainResult:
    """Per-example SGD on epochs resampled under the fixed temperature distribution."""
    p_train = training_distribution(data.sizes)
    p_tau = temperature_distribution(data.sizes, tau)
    theta, trajectory, q, tracker = _epoch_loop(
        data, model, p_tau.weights, lambda ema: p_tau.weights, schedule, epochs, ema_lambda, seed,
        target_total, False, theta0,
    )
    return TrainResult(theta, trajectory, data.labels, p_train, p_tau, Singleton(p_tau), {"tracker": tracker})


def exponentiated_gradient_step(q, grad, step: float) -> np.ndarray:
    """Mirror ascent under negative entropy: ``q_i * exp(step * grad_i)``, renormalized."""
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        logits = np.log(q) + step * np.asarray(grad, dtype=float)
    logits -= logits[np.isfinite(logits)].max()
    w = np.exp(logits)
    return w / w.sum()


def primal_dual_train(
    data: GroupedDataset,
    model: Model,
    uset: UncertaintySet,
    schedule: LrSchedule,
    q_step: float,
    steps: int,
    gradient_mode: GradientMode = SampleFromQ(),
    baselines: Baselines | None = None,
    ema_lambda: float = 0.1,
    seed: int = 0,
    cfg: SolverConfig = DEFAULT_SOLVER,
    batch_size: int = 1,
    log_every: int | None = None,
    theta0=None,
) -> TrainResult:
    """Stochastic descent on theta alternated with mirror ascent on q every step.

    The q-update depends on the set: exponentiated gradient on the full
    simplex, projected ascent on the chi-square ball, and for CVaR the best
    response to the EMA losses (a primal step on theta, best response on q).
    """
    if not q_step > 0:
        raise ConfigError("q_step must be positive")
    if steps < 1 or batch_size < 1:
        raise ConfigError("steps and batch_size must be positive")
    n = data.n_groups
    p_train = training_distribution(data.sizes)
    uset = resolve_center(uset, p_train)
    b = _baseline_vector(baselines, data)
    if isinstance(gradient_mode, ImportanceWeight):
        if len(gradient_mode.p0) != n:
            raise ConfigError(f"proposal p0 has {len(gradient_mode.p0)} groups, data has {n}")
        p0 = gradient_mode.p0.weights
        p0_cdf = np.cumsum(p0)
    elif not isinstance(gradient_mode, SampleFromQ):
        raise ConfigError(f"unknown gradient mode {gradient_mode!r}")
    if log_every is None:
        log_every = max(1, sum(data.sizes) // batch_size)

    rng = np.random.default_rng(seed)
    theta = model.init_theta(seed) if theta0 is None else np.array(theta0, dtype=float)
    tracker = LossTracker.zeros(n, ema_lambda)
    ema, lam = tracker.ema, tracker.lam
    q = p_train.weights.copy()
    sizes = data.sizes
    feats, targets, labels = data.features, data.targets, data.labels
    importance = isinstance(gradient_mode, ImportanceWeight)
    trajectory = []
    g_theta = np.zeros(model.n_params)
    g_q = np.zeros(n)
    for step in range(steps):
        lr = lr_at(schedule, step)
        if importance:
            sample_p, cdf = p0, p0_cdf
        else:
            sample_p, cdf = q, np.cumsum(q)
        picks = np.minimum(np.searchsorted(cdf, rng.random(batch_size) * cdf[-1], side="right"), n - 1)
        g_theta[:] = 0.0
        g_q[:] = 0.0
        for g in picks.tolist():
            i = int(rng.integers(sizes[g]))
            loss, grad = model.loss_grad(theta, feats[g][i], targets[g][i])
            if not math.isfinite(loss):
                raise TrainingDiverged(labels[g], step, loss)
            g_theta += (q[g] / p0[g]) * grad if importance else grad
            g_q[g] += (loss - b[g]) / sample_p[g]
            ema[g] = lam * loss + (1.0 - lam) * ema[g]
            tracker.counts[g] += 1
        theta -= (lr / batch_size) * g_theta
        g_q /= batch_size

        if isinstance(uset, FullSimplex):
            q = exponentiated_gradient_step(q, g_q, q_step)
        elif isinstance(uset, ChiSquare):
            q = project_chi_square(q + q_step * g_q, uset, cfg).weights.copy()
        elif isinstance(uset, CVaR):
            q = best_response(ema - b, uset, cfg).q.weights.copy()
        # Singleton: q stays at its center

        done = step + 1
        if done % log_every == 0 or done == steps:
            _check_theta(theta, "<all>", done)
            true = model.group_losses(theta, data)
            trajectory.append(EpochRecord((done - 1) // log_every, done, q.copy(), ema.copy(), true, lr))
    if isinstance(uset, Singleton):
        q = uset.center.weights
    return TrainResult(theta, trajectory, labels, p_train, GroupWeights(q), uset, {"tracker": tracker})


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def write_trajectory_csv(path, result: TrainResult) -> None:
    """One row per (epoch, group); floats at 9 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for rec in result.trajectory:
            for g, label in enumerate(result.labels):
                writer.writerow(
                    [rec.epoch, rec.step, label, _fmt(rec.q[g]), _fmt(rec.ema[g]), _fmt(rec.true_losses[g]), _fmt(rec.lr)]
                )
