"""Distributionally robust optimization over grouped losses."""

from .core import (
    CVaR,
    ChiSquare,
    DimensionError,
    FullSimplex,
    GroupWeights,
    Singleton,
    UncertaintySet,
    chi_square_divergence,
    resolve_center,
    temperature_distribution,
    training_distribution,
)
from .objectives import Baselines, read_baselines, robust_loss, weighted_loss, write_baselines
from .solvers import BestResponse, SolverConfig, SolverError, best_response, project_chi_square

__version__ = "0.1.0"
