"""Threshold calibration on contamination-free queries.

The threshold is a lower-tail order statistic of clean scores; the sample
size needed for it to be trustworthy comes from a DKW-style argument
combined with the sub-Gaussian tail of the score.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
import tempfile
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .dist import log_ratio
from .errors import ArgumentError, ConfigurationError, DimensionError, DomainError

DEFAULT_ALPHA = 0.05
DEFAULT_EPSILON = 0.05
DEFAULT_CALIBRATION_SIZE = 500


class CalibrationWarning(UserWarning):
    pass


def fit_threshold(scores, alpha):
    """Lower-tail empirical ``alpha``-quantile without interpolation.

    Sorts ascending and returns the element at index ``ceil(alpha * n) - 1``
    (clamped to the valid range), so exactly ``ceil(alpha * n)`` scores are
    ``<=`` the result when there are no ties.
    """
    z = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    if z.size == 0:
        raise ArgumentError("cannot fit a threshold on an empty score list")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    n = z.size
    k = math.ceil(alpha * n) - 1
    return float(z[min(max(k, 0), n - 1)])


def required_sample_size(gamma, t_len, delta, epsilon):
    """Calibration size ``ceil(8 gamma^2 T / delta^2 * ln(2 / epsilon))``."""
    if delta <= 0:
        raise DomainError("influence gap delta must be positive")
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    if t_len < 1:
        raise DomainError("t_len must be positive")
    if not 0.0 < epsilon <= 2.0:
        raise DomainError(f"epsilon must lie in (0, 2], got {epsilon}")
    return math.ceil(8.0 * gamma**2 * t_len / delta**2 * math.log(2.0 / epsilon))


def dkw_halfwidth(n, epsilon):
    """Half-width ``sqrt(ln(2/eps) / (2n))`` solving ``2 exp(-2 n w^2) = eps``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if not 0.0 < epsilon <= 2.0:
        raise DomainError(f"epsilon must lie in (0, 2], got {epsilon}")
    return math.sqrt(math.log(2.0 / epsilon) / (2.0 * n))


def estimate_gamma(pairs):
    """Largest absolute log-ratio over every pair, position and vocabulary entry."""
    pairs = list(pairs)
    if not pairs:
        raise ArgumentError("need at least one distribution pair")
    g = 0.0
    for p, q in pairs:
        if p.shape != q.shape:
            raise DimensionError(f"shape mismatch: {p.shape} vs {q.shape}")
        g = max(g, float(np.max(np.abs(log_ratio(p.probs, q.probs)))))
    return g


def estimate_delta(clean_scores, memorised_scores):
    """Observed mean gap between clean and known-memorised scores on a dev split."""
    c = np.asarray(clean_scores, dtype=np.float64)
    m = np.asarray(memorised_scores, dtype=np.float64)
    if c.size == 0 or m.size == 0:
        raise ArgumentError("both score lists must be non-empty")
    return float(c.mean() - m.mean())


@dataclass(frozen=True)
class CalibrationResult:
    tau: float
    alpha: float
    n: int
    gamma_hat: float
    dkw_width: float
    epsilon: float
    t_len: int
    delta_hat: float | None = None
    created_at: str = ""
    backend_fingerprint: str = ""
    scores: tuple = field(default=(), repr=False)

    def required_n(self):
        if self.delta_hat is None or self.delta_hat <= 0 or self.gamma_hat <= 0:
            return None
        return required_sample_size(self.gamma_hat, self.t_len, self.delta_hat, self.epsilon)

    def to_dict(self):
        d = asdict(self)
        d["scores"] = list(self.scores)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["scores"] = tuple(d.get("scores", ()))
        return cls(**d)


def calibrate(
    clean_scores,
    alpha=DEFAULT_ALPHA,
    epsilon=DEFAULT_EPSILON,
    gamma_hat=1.0,
    t_len=64,
    delta_hat=None,
    backend_fingerprint="",
    created_at=None,
):
    scores = tuple(float(s) for s in clean_scores)
    if not scores:
        raise ArgumentError("calibration needs at least one clean score")
    tau = fit_threshold(scores, alpha)
    n = len(scores)
    if created_at is None:
        created_at = _dt.datetime.now(_dt.timezone.utc).isoformat()
    result = CalibrationResult(
        tau=tau,
        alpha=float(alpha),
        n=n,
        gamma_hat=float(gamma_hat),
        dkw_width=dkw_halfwidth(n, epsilon),
        epsilon=float(epsilon),
        t_len=int(t_len),
        delta_hat=None if delta_hat is None else float(delta_hat),
        created_at=created_at,
        backend_fingerprint=backend_fingerprint,
        scores=scores,
    )
    need = result.required_n()
    if need is not None and n < need:
        warnings.warn(
            f"calibration set has {n} scores; the finite-sample guarantee needs {need}",
            CalibrationWarning,
            stacklevel=2,
        )
    return result


def save_calibration(result, path):
    """Write the artifact as one JSON document, atomically."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".calib-", suffix=".json", dir=directory)
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(result.to_dict(), fh, indent=2)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_calibration(path):
    try:
        with open(path) as fh:
            return CalibrationResult.from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigurationError(f"calibration artifact not found: {path}") from None


def check_fingerprint(result, fingerprint, force=False):
    if result.backend_fingerprint and result.backend_fingerprint != fingerprint and not force:
        raise ConfigurationError(
            f"calibration was fitted for backend {result.backend_fingerprint!r}, "
            f"not {fingerprint!r}; recalibrate or pass force=True"
        )
