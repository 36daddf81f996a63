"""Monte Carlo verification of the detector's statistical guarantees."""

from .config import ExperimentConfig, ExperimentReport, PointResult, write_report
from .experiments import (
    DEFAULTS,
    REGISTRY,
    default_config,
    run,
    run_adaptive,
    run_collapse,
    run_finite_sample,
    run_gap_histogram,
    run_minimax_small,
    run_subgaussian,
    run_uniform_batch,
)
from .stats import binomial_floor, wilson_interval

__all__ = [
    "DEFAULTS",
    "ExperimentConfig",
    "ExperimentReport",
    "PointResult",
    "REGISTRY",
    "binomial_floor",
    "default_config",
    "run",
    "run_adaptive",
    "run_collapse",
    "run_finite_sample",
    "run_gap_histogram",
    "run_minimax_small",
    "run_subgaussian",
    "run_uniform_batch",
    "wilson_interval",
    "write_report",
]
