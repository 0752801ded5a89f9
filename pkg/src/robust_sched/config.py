"""JSON experiment configuration. Unknown keys anywhere are rejected."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import core, tasks
from .optim import ImportanceWeight, InverseSqrt, SampleFromQ, StepDecay
from .solvers import SolverConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# tasks


class QuadraticMeansTask(_Strict):
    kind: Literal["quadratic_means"]
    mus: list[float]
    noise: float = Field(0.0, ge=0)
    sizes: Optional[list[int]] = None

    def build(self) -> tasks.TaskSpec:
        return tasks.QuadraticMeans(tuple(self.mus), self.noise, None if self.sizes is None else tuple(self.sizes))


class LinearRegressionTask(_Strict):
    kind: Literal["grouped_linear_regression"]
    dim: int = Field(gt=0)
    weights: list[list[float]]
    noise: list[float]
    sizes: list[int]

    def build(self) -> tasks.TaskSpec:
        return tasks.GroupedLinearRegression(
            self.dim, tuple(map(tuple, self.weights)), tuple(self.noise), tuple(self.sizes)
        )


class ImbalancedRegressionTask(_Strict):
    kind: Literal["imbalanced_regression"]
    total: int = Field(10_000, gt=0)
    proportions: list[float] = list(tasks.TED_RELATED_PROPORTIONS)
    shift: float = 1.0
    noise: float = Field(0.1, ge=0)

    def build(self) -> tasks.TaskSpec:
        return tasks.imbalanced_regression(self.total, tuple(self.proportions), self.shift, self.noise)


class LogisticTask(_Strict):
    kind: Literal["grouped_logistic"]
    dim: int = Field(gt=0)
    separation: list[float]
    sizes: list[int]
    hidden: int = Field(0, ge=0)

    def build(self) -> tasks.TaskSpec:
        return tasks.GroupedLogistic(self.dim, tuple(self.separation), tuple(self.sizes), self.hidden)


TaskConfig = Annotated[
    Union[QuadraticMeansTask, LinearRegressionTask, ImbalancedRegressionTask, LogisticTask],
    Field(discriminator="kind"),
]

# uncertainty sets; "train" centers on the training distribution

Center = Union[Literal["train", "uniform"], list[float]]


def _center(center: Center, n_groups: int | None) -> core.GroupWeights | None:
    if center == "train":
        return None
    if center == "uniform":
        if n_groups is None:
            raise ValueError("a uniform center needs the group count")
        return core.GroupWeights.uniform(n_groups)
    return core.GroupWeights(center)


class ChiSquareSet(_Strict):
    kind: Literal["chi_square"]
    rho: float = Field(gt=0)
    center: Center = "train"

    def build(self, n_groups=None):
        return core.ChiSquare(self.rho, _center(self.center, n_groups))


class CVaRSet(_Strict):
    kind: Literal["cvar"]
    alpha: float = Field(gt=0, le=1)
    center: Center = "train"

    def build(self, n_groups=None):
        return core.CVaR(self.alpha, _center(self.center, n_groups))


class FullSimplexSet(_Strict):
    kind: Literal["full_simplex"]

    def build(self, n_groups=None):
        return core.FullSimplex()


class SingletonSet(_Strict):
    kind: Literal["singleton"]
    center: Center = "train"

    def build(self, n_groups=None):
        return core.Singleton(_center(self.center, n_groups))


SetConfig = Annotated[
    Union[ChiSquareSet, CVaRSet, FullSimplexSet, SingletonSet], Field(discriminator="kind")
]

# methods


class ErmMethod(_Strict):
    name: Literal["erm"]
    tau: float = Field(1.0, gt=0)
    target_total: Optional[int] = Field(None, gt=0)


class IbrMethod(_Strict):
    name: Literal["ibr"]
    set: SetConfig
    baselines_path: Optional[str] = None
    target_total: Optional[int] = Field(None, gt=0)
    warm_start: bool = False

    @model_validator(mode="after")
    def _no_full_simplex(self):
        if isinstance(self.set, FullSimplexSet):
            raise ValueError(
                "method.set: ibr cannot be combined with full_simplex "
                "(every epoch would be spent on one group); use primal_dual instead"
            )
        return self


class ImportanceWeightMode(_Strict):
    importance_weight: Center


class PrimalDualMethod(_Strict):
    name: Literal["primal_dual"]
    set: SetConfig
    q_step: float = Field(gt=0)
    gradient_mode: Union[Literal["sample_from_q"], ImportanceWeightMode] = "sample_from_q"
    batch_size: int = Field(1, gt=0)
    baselines_path: Optional[str] = None

    def build_mode(self, n_groups: int, sizes) -> SampleFromQ | ImportanceWeight:
        if self.gradient_mode == "sample_from_q":
            return SampleFromQ()
        spec = self.gradient_mode.importance_weight
        if spec == "train":
            return ImportanceWeight(core.training_distribution(sizes))
        return ImportanceWeight(_center(spec, n_groups))


MethodConfig = Annotated[Union[ErmMethod, IbrMethod, PrimalDualMethod], Field(discriminator="name")]

# schedules


class InverseSqrtSchedule(_Strict):
    kind: Literal["inverse_sqrt"]
    peak: float = Field(gt=0)
    warmup_steps: int = Field(gt=0)

    def build(self):
        return InverseSqrt(self.peak, self.warmup_steps)


class StepDecaySchedule(_Strict):
    kind: Literal["step_decay"]
    base: float = Field(gt=0)
    warmup_steps: int = Field(0, ge=0)
    decay_every: int = Field(gt=0)
    factor: float = Field(0.5, gt=0, lt=1)

    def build(self):
        return StepDecay(self.base, self.warmup_steps, self.decay_every, self.factor)


ScheduleConfig = Annotated[Union[InverseSqrtSchedule, StepDecaySchedule], Field(discriminator="kind")]


class SolverSettings(_Strict):
    dual_tolerance: float = Field(1e-10, gt=0)
    max_iterations: int = Field(200, ge=1)

    def build(self) -> SolverConfig:
        return SolverConfig(self.dual_tolerance, self.max_iterations)


class _Common(_Strict):
    task: TaskConfig
    schedule: ScheduleConfig
    epochs: Optional[int] = Field(None, gt=0)
    steps: Optional[int] = Field(None, gt=0)
    ema_lambda: float = Field(0.1, gt=0, le=1)
    seed: int = 0
    data_seed: int = 0
    solver: SolverSettings = SolverSettings()
    output_dir: str = "runs/default"


def _check_budget(method, epochs, steps, where="method"):
    if isinstance(method, PrimalDualMethod):
        if epochs is None and steps is None:
            raise ValueError(f"{where}: primal_dual needs 'steps' or 'epochs'")
    elif epochs is None:
        raise ValueError(f"{where}: {method.name} needs 'epochs'")


def _check_baselines(method, where="method"):
    path = getattr(method, "baselines_path", None)
    if path is not None and not Path(path).is_file():
        raise ValueError(f"{where}.baselines_path: file not found: {path}")


class ExperimentConfig(_Common):
    method: MethodConfig

    @model_validator(mode="after")
    def _consistent(self):
        _check_budget(self.method, self.epochs, self.steps)
        _check_baselines(self.method)
        return self


class CompareEntry(_Strict):
    label: str = Field(min_length=1)
    method: MethodConfig


class CompareConfig(_Common):
    methods: list[CompareEntry] = Field(min_length=1)

    @model_validator(mode="after")
    def _consistent(self):
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError("methods: labels must be unique")
        for i, entry in enumerate(self.methods):
            _check_budget(entry.method, self.epochs, self.steps, f"methods[{i}].method")
            _check_baselines(entry.method, f"methods[{i}].method")
        return self

    def experiment(self, entry: CompareEntry) -> ExperimentConfig:
        fields = self.model_dump(exclude={"methods", "output_dir"})
        return ExperimentConfig(
            **fields, method=entry.method.model_dump(), output_dir=str(Path(self.output_dir) / entry.label)
        )
