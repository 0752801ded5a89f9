"""Synthetic grouped learning problems with per-example loss and gradient.

A task spec is generated into a :class:`GroupedDataset`; :func:`model_for`
returns the matching loss/gradient provider.  Every model is a pure function
of ``(theta, x, y)`` so it is safe to call from several threads at once.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

# Training proportions of the eight-language TED "related" set.
TED_RELATED_PROPORTIONS = (0.004, 0.006, 0.013, 0.081, 0.240, 0.274, 0.243, 0.136)


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class QuadraticMeans:
    """Scalar targets ``mu_i + noise * N(0, 1)``; loss ``(theta - y)^2``."""

    mus: tuple[float, ...]
    noise: float = 0.0
    sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mus", tuple(float(m) for m in self.mus))
        if self.sizes is None:
            object.__setattr__(self, "sizes", (100,) * len(self.mus))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        _check_sizes(self.sizes, len(self.mus))
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


@dataclass(frozen=True)
class GroupedLinearRegression:
    """``y = x @ w_i + noise_i * N(0, 1)`` with ``x ~ N(0, I_dim)``; squared error."""

    dim: int
    weights: tuple[tuple[float, ...], ...]
    noise: tuple[float, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        w = tuple(tuple(float(c) for c in row) for row in self.weights)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noise", tuple(float(s) for s in self.noise))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.dim < 1:
            raise ValueError("dim must be positive")
        n = len(w)
        if any(len(row) != self.dim for row in w):
            raise ValueError(f"every true weight vector needs {self.dim} entries")
        if len(self.noise) != n:
            raise ValueError("one noise level per group is required")
        if any(s < 0 for s in self.noise):
            raise ValueError("noise must be non-negative")
        _check_sizes(self.sizes, n)


@dataclass(frozen=True)
class GroupedLogistic:
    """Two Gaussian classes at ``+-separation_i / 2`` along a per-group direction.

    ``hidden == 0`` gives (convex) logistic regression; ``hidden > 0`` a
    one-hidden-layer tanh network, which is non-convex.
    """

    dim: int
    separation: tuple[float, ...]
    sizes: tuple[int, ...]
    hidden: int = 0

    def __post_init__(self):
        object.__setattr__(self, "separation", tuple(float(s) for s in self.separation))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.dim < 1 or self.hidden < 0:
            raise ValueError("dim must be positive and hidden non-negative")
        _check_sizes(self.sizes, len(self.separation))


TaskSpec = Union[QuadraticMeans, GroupedLinearRegression, GroupedLogistic]


def _check_sizes(sizes: Sequence[int], n: int) -> None:
    if len(sizes) != n:
        raise ValueError(f"{len(sizes)} group sizes for {n} groups")
    if n == 0 or min(sizes) < 1:
        raise ValueError("every group needs at least one example")


def proportional_sizes(proportions: Sequence[float], total: int) -> tuple[int, ...]:
    """Round ``proportions * total`` to integers, at least one example per group."""
    return tuple(max(1, int(round(p * total))) for p in proportions)


def imbalanced_regression(
    total: int = 10_000,
    proportions: Sequence[float] = TED_RELATED_PROPORTIONS,
    shift: float = 1.0,
    noise: float = 0.1,
) -> GroupedLinearRegression:
    """Regression groups whose optima sit on orthogonal axes, ``w_i = shift * e_i``.

    A shared model can only trade groups off against each other, so the
    group weighting decides who pays; sizes follow ``proportions``.
    """
    n = len(proportions)
    weights = tuple(tuple(shift if j == i else 0.0 for j in range(n)) for i in range(n))
    return GroupedLinearRegression(
        dim=n, weights=weights, noise=(noise,) * n, sizes=proportional_sizes(proportions, total)
    )


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """N groups of ``(features, target)`` rows; ``features[i]`` has shape ``(n_i, f)``."""

    features: tuple[np.ndarray, ...]
    targets: tuple[np.ndarray, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        feats = tuple(np.asarray(x, dtype=float).reshape(len(x), -1) for x in self.features)
        ys = tuple(np.asarray(y, dtype=float).reshape(-1) for y in self.targets)
        if not feats or len(feats) != len(ys):
            raise ValueError("need the same, non-zero number of feature and target groups")
        widths = {x.shape[1] for x in feats}
        if len(widths) != 1:
            raise ValueError(f"feature dimension differs across groups: {sorted(widths)}")
        for i, (x, y) in enumerate(zip(feats, ys)):
            if len(y) == 0:
                raise ValueError(f"group {i} is empty")
            if x.shape[0] != len(y):
                raise ValueError(f"group {i}: {x.shape[0]} feature rows, {len(y)} targets")
            x.setflags(write=False)
            y.setflags(write=False)
        labels = tuple(self.labels) or tuple(f"g{i}" for i in range(len(feats)))
        if len(labels) != len(feats) or len(set(labels)) != len(labels):
            raise ValueError("need one distinct label per group")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "targets", ys)
        object.__setattr__(self, "labels", labels)

    @property
    def n_groups(self) -> int:
        return len(self.targets)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(y) for y in self.targets)

    @property
    def feature_dim(self) -> int:
        return self.features[0].shape[1]

    def example(self, group: int, index: int) -> tuple[np.ndarray, float]:
        return self.features[group][index], float(self.targets[group][index])

    def identical_to(self, other: "GroupedDataset") -> bool:
        return (
            self.labels == other.labels
            and all(np.array_equal(a, b) for a, b in zip(self.features, other.features))
            and all(np.array_equal(a, b) for a, b in zip(self.targets, other.targets))
        )


def generate(spec: TaskSpec, seed: int) -> GroupedDataset:
    """Deterministic dataset for ``(spec, seed)`` with exactly the requested group sizes."""
    rng = np.random.default_rng(seed)
    feats, ys = [], []
    if isinstance(spec, QuadraticMeans):
        for mu, n in zip(spec.mus, spec.sizes):
            noise = rng.standard_normal(n) * spec.noise if spec.noise > 0 else np.zeros(n)
            feats.append(np.zeros((n, 0)))
            ys.append(mu + noise)
    elif isinstance(spec, GroupedLinearRegression):
        for w, sigma, n in zip(spec.weights, spec.noise, spec.sizes):
            x = rng.standard_normal((n, spec.dim))
            ys.append(x @ np.asarray(w) + sigma * rng.standard_normal(n))
            feats.append(x)
    elif isinstance(spec, GroupedLogistic):
        for sep, n in zip(spec.separation, spec.sizes):
            direction = rng.standard_normal(spec.dim)
            direction /= np.linalg.norm(direction)
            y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            feats.append(0.5 * sep * y[:, None] * direction + rng.standard_normal((n, spec.dim)))
            ys.append(y)
    else:
        raise TypeError(f"unknown task spec {spec!r}")
    return GroupedDataset(tuple(feats), tuple(ys))


class Model:
    """Per-example loss and gradient for a parameter vector of size ``n_params``."""

    n_params: int

    def init_theta(self, seed: int = 0) -> np.ndarray:
        return np.zeros(self.n_params)

    def loss_grad(self, theta: np.ndarray, x: np.ndarray, y: float) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def losses(self, theta: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def group_losses(self, theta: np.ndarray, data: GroupedDataset) -> np.ndarray:
        """Average loss of every group at ``theta``."""
        return np.array([self.losses(theta, x, y).mean() for x, y in zip(data.features, data.targets)])


class QuadraticModel(Model):
    n_params = 1

    def loss_grad(self, theta, x, y):
        r = theta[0] - y
        return r * r, np.array([2.0 * r])

    def losses(self, theta, X, Y):
        return (theta[0] - Y) ** 2


class LinearRegressionModel(Model):
    def __init__(self, dim: int):
        self.n_params = dim

    def loss_grad(self, theta, x, y):
        r = float(x @ theta) - y
        return r * r, (2.0 * r) * x

    def losses(self, theta, X, Y):
        return (X @ theta - Y) ** 2


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LogisticModel(Model):
    """Linear logit ``x @ w + b`` with labels in {-1, +1}; parameters ``(w, b)``."""

    def __init__(self, dim: int):
        self.dim = dim
        self.n_params = dim + 1

    def loss_grad(self, theta, x, y):
        margin = y * (float(x @ theta[:-1]) + theta[-1])
        coef = -y * float(_sigmoid(-margin))
        grad = np.empty(self.n_params)
        grad[:-1] = coef * x
        grad[-1] = coef
        return float(_softplus(-margin)), grad

    def losses(self, theta, X, Y):
        return _softplus(-Y * (X @ theta[:-1] + theta[-1]))


class TwoLayerModel(Model):
    """``f(x) = w2 @ tanh(W1 x + b1) + b2`` with logistic loss.

    Parameters are packed as ``[W1.ravel(), b1, w2, b2]``.
    """

    def __init__(self, dim: int, hidden: int):
        self.dim, self.hidden = dim, hidden
        self.n_params = hidden * dim + 2 * hidden + 1

    def init_theta(self, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        theta = np.zeros(self.n_params)
        h, d = self.hidden, self.dim
        theta[: h * d] = rng.standard_normal(h * d) / math.sqrt(d)
        theta[h * d + h : h * d + 2 * h] = rng.standard_normal(h) / math.sqrt(h)
        return theta

    def _unpack(self, theta):
        h, d = self.hidden, self.dim
        W1 = theta[: h * d].reshape(h, d)
        b1 = theta[h * d : h * d + h]
        w2 = theta[h * d + h : h * d + 2 * h]
        return W1, b1, w2, theta[-1]

    def loss_grad(self, theta, x, y):
        W1, b1, w2, b2 = self._unpack(theta)
        a = np.tanh(W1 @ x + b1)
        margin = y * (float(w2 @ a) + b2)
        dout = -y * float(_sigmoid(-margin))
        dpre = dout * w2 * (1.0 - a * a)
        h, d = self.hidden, self.dim
        grad = np.empty(self.n_params)
        grad[: h * d] = np.outer(dpre, x).ravel()
        grad[h * d : h * d + h] = dpre
        grad[h * d + h : h * d + 2 * h] = dout * a
        grad[-1] = dout
        return float(_softplus(-margin)), grad

    def losses(self, theta, X, Y):
        W1, b1, w2, b2 = self._unpack(theta)
        out = np.tanh(X @ W1.T + b1) @ w2 + b2
        return _softplus(-Y * out)


def model_for(spec: TaskSpec) -> Model:
    if isinstance(spec, QuadraticMeans):
        return QuadraticModel()
    if isinstance(spec, GroupedLinearRegression):
        return LinearRegressionModel(spec.dim)
    if isinstance(spec, GroupedLogistic):
        return TwoLayerModel(spec.dim, spec.hidden) if spec.hidden else LogisticModel(spec.dim)
    raise TypeError(f"unknown task spec {spec!r}")


def example_loss_grad(model: Model, theta, example) -> tuple[float, np.ndarray]:
    """Loss and gradient of one ``(x, y)`` example; raises on non-finite output."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_params,):
        raise ValueError(f"theta has shape {theta.shape}, model expects ({model.n_params},)")
    x, y = example
    loss, grad = model.loss_grad(theta, np.asarray(x, dtype=float), float(y))
    if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NonFiniteLossError(f"non-finite loss {loss!r} or gradient")
    return float(loss), grad


def export_csv(data: GroupedDataset, directory: str | Path) -> list[Path]:
    """Write one ``<label>.csv`` per group with columns ``group_id, x0..x{f-1}, target``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = ["group_id", *(f"x{j}" for j in range(data.feature_dim)), "target"]
    paths = []
    for label, X, Y in zip(data.labels, data.features, data.targets):
        path = directory / f"{label}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row, y in zip(X.tolist(), Y.tolist()):
                writer.writerow([label, *map(repr, row), repr(y)])
        paths.append(path)
    return paths


def import_csv(paths: Sequence[str | Path]) -> GroupedDataset:
    """Inverse of :func:`export_csv`; group order follows ``paths``."""
    feats, ys, labels = [], [], []
    for path in paths:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[0] != "group_id" or header[-1] != "target":
            raise ValueError(f"{path}: header must start with group_id and end with target")
        ids = {r[0] for r in body}
        if len(ids) != 1:
            raise ValueError(f"{path}: expected a single group id, found {sorted(ids)}")
        labels.append(body[0][0])
        feats.append(np.array([[float(c) for c in r[1:-1]] for r in body]).reshape(len(body), len(header) - 2))
        ys.append(np.array([float(r[-1]) for r in body]))
    return GroupedDataset(tuple(feats), tuple(ys), tuple(labels))
