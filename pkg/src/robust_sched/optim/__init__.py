from .schedules import InverseSqrt, LrSchedule, StepDecay, lr_at
from .tracking import LossTracker, ResamplePlan, ema_update, make_resample_plan
from .training import (
    TRAJECTORY_HEADER,
    ConfigError,
    EpochRecord,
    ImportanceWeight,
    SampleFromQ,
    TrainResult,
    TrainingDiverged,
    erm_train,
    exponentiated_gradient_step,
    ibr_train,
    primal_dual_train,
    write_trajectory_csv,
)
