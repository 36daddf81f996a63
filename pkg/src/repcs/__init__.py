"""Retrieval-path contamination scoring.

Flags retrieval-augmented generations that ignore their retrieved evidence by
comparing the model's token distributions with and without the passages.
"""

from .calibrate import (
    CalibrationResult,
    calibrate,
    dkw_halfwidth,
    estimate_gamma,
    fit_threshold,
    load_calibration,
    required_sample_size,
    save_calibration,
)
from .detector import Decision, ScoreRecord, detect, detect_batch
from .dist import (
    KlScore,
    MixtureSpec,
    ScoreMode,
    TokenDistribution,
    chi_square_divergence,
    collapse_bound,
    cross_entropy,
    entropy,
    kl_divergence,
    mix,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationResult",
    "Decision",
    "KlScore",
    "MixtureSpec",
    "ScoreMode",
    "ScoreRecord",
    "TokenDistribution",
    "calibrate",
    "chi_square_divergence",
    "collapse_bound",
    "cross_entropy",
    "detect",
    "detect_batch",
    "dkw_halfwidth",
    "entropy",
    "estimate_gamma",
    "fit_threshold",
    "kl_divergence",
    "load_calibration",
    "mix",
    "required_sample_size",
    "save_calibration",
]
