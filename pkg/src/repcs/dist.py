"""Token-probability tensors and the divergences computed on them.

All tensors are laid out as ``(V, T)``: vocabulary along axis 0, generated
position along axis 1.  The array-level helpers accept any leading batch
shape and always treat axis ``-2`` as the vocabulary axis, which is what lets
the simulation code score tens of thousands of instances in one call.

Everything is in nats.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DimensionError, DomainError

EPS_FLOOR = 1e-12
LOG_RATIO_CAP = -math.log(EPS_FLOOR)

# column-sum tolerance for accepting externally supplied probabilities
_SUM_TOL = 1e-6


class ScoreMode(str, enum.Enum):
    FULL_VOCAB = "fullvocab"
    REALIZED_TOKEN = "realized"


# ---------------------------------------------------------------------------
# array-level helpers
# ---------------------------------------------------------------------------


def smooth(probs, floor=EPS_FLOOR):
    """Renormalize each column and lift every entry to at least ``floor``.

    Implemented as ``(1 - V*floor) * p + floor`` on the normalized columns,
    which is the additive floor followed by renormalization written so that
    the minimum entry is exactly ``floor``.  The L1 change per column is at
    most ``2 * V * floor``.
    """
    p = np.asarray(probs, dtype=np.float64)
    v = p.shape[-2]
    if v * floor >= 1.0:
        raise DomainError(f"floor {floor} too large for vocabulary of size {v}")
    p = p / p.sum(axis=-2, keepdims=True)
    return (1.0 - v * floor) * p + floor


def log_ratio(p, q):
    """Clipped elementwise ``ln p - ln q``."""
    return np.clip(np.log(p) - np.log(q), -LOG_RATIO_CAP, LOG_RATIO_CAP)


def kl_columns(p, q):
    """Per-position ``KL(p || q)`` over the vocabulary axis; shape ``(..., T)``."""
    return np.sum(p * log_ratio(p, q), axis=-2)


def chi_square_columns(q, p):
    """Per-position Pearson divergence ``chi2(q || p)``; shape ``(..., T)``."""
    return np.sum((q - p) ** 2 / p, axis=-2)


def random_simplex(rng, vocab, t_len, concentration=1.0, size=()):
    """Draw probability columns from a symmetric Dirichlet.

    Returns an array of shape ``size + (vocab, t_len)`` whose vocabulary
    columns are independent draws.  Small concentrations give sharp,
    near one-hot columns; large ones approach the uniform distribution.
    """
    if concentration <= 0:
        raise DomainError("concentration must be positive")
    size = (size,) if isinstance(size, int) else tuple(size)
    draws = rng.dirichlet(np.full(vocab, float(concentration)), size=size + (t_len,))
    return np.swapaxes(draws, -1, -2)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TokenDistribution:
    """Immutable ``V x T`` column-stochastic matrix.

    Use :meth:`from_probs` or :meth:`from_logprobs` for untrusted input; the
    bare constructor assumes the array is already smoothed and normalized and
    only checks shape.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise DimensionError(f"expected a V x T matrix, got shape {p.shape}")
        if p.shape[0] < 2 or p.shape[1] < 1:
            raise DimensionError(f"need V >= 2 and T >= 1, got {p.shape}")
        if p is self.probs and p.flags.writeable:
            p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_probs(cls, probs, floor=EPS_FLOOR):
        p = np.array(probs, dtype=np.float64)
        if p.ndim != 2:
            raise DimensionError(f"expected a V x T matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DomainError("probabilities must be finite and non-negative")
        sums = p.sum(axis=0)
        bad = np.flatnonzero(np.abs(sums - 1.0) > _SUM_TOL)
        if bad.size:
            t = int(bad[0])
            raise DomainError(f"column {t} sums to {sums[t]:.6g}, not 1")
        # already-smoothed input is kept bit-for-bit so that serialization round-trips
        if p.min() >= floor and np.all(np.abs(sums - 1.0) <= 1e-12):
            return cls(p)
        return cls(smooth(p, floor))

    @classmethod
    def from_logprobs(cls, logprobs, floor=EPS_FLOOR):
        return cls.from_probs(np.exp(np.asarray(logprobs, dtype=np.float64)), floor)

    @classmethod
    def uniform(cls, vocab, t_len):
        return cls(np.full((vocab, t_len), 1.0 / vocab))

    @property
    def vocab_size(self):
        return self.probs.shape[0]

    @property
    def length(self):
        return self.probs.shape[1]

    @property
    def shape(self):
        return self.probs.shape

    def argmax_tokens(self):
        return np.argmax(self.probs, axis=0)

    def __eq__(self, other):
        if not isinstance(other, TokenDistribution):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.probs, other.probs)

    __hash__ = None

    def to_record(self, logprob=False):
        data = np.log(self.probs) if logprob else self.probs
        rec = {
            "vocab_size": self.vocab_size,
            "length": self.length,
            "probs": data.reshape(-1).tolist(),
        }
        if logprob:
            rec["logprob"] = True
        return rec

    @classmethod
    def from_record(cls, rec, key="probs"):
        try:
            v = int(rec["vocab_size"])
            t = int(rec["length"])
            flat = np.asarray(rec[key], dtype=np.float64)
        except KeyError as exc:
            raise ArgumentError(f"missing field {exc.args[0]!r}") from None
        if flat.size != v * t:
            raise DimensionError(f"{key}: expected {v}*{t}={v * t} values, got {flat.size}")
        mat = flat.reshape(v, t)
        if rec.get("logprob"):
            return cls.from_logprobs(mat)
        return cls.from_probs(mat)


@dataclass(frozen=True)
class KlScore:
    total: float
    per_position: tuple
    mode: ScoreMode = ScoreMode.FULL_VOCAB

    def to_dict(self):
        return {"total": self.total, "per_position": list(self.per_position), "mode": self.mode.value}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["total"]), tuple(float(x) for x in d["per_position"]), ScoreMode(d["mode"]))


@dataclass(frozen=True)
class MixtureSpec:
    """Retrieval-augmented distribution as ``(1 - eta) * parametric + eta * evidence``."""

    eta: float
    parametric: TokenDistribution
    evidence_only: TokenDistribution

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def _check_same_shape(p, q):
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {q.shape}")


def kl_divergence(p, q, mode=ScoreMode.FULL_VOCAB, realized=None):
    """Score ``KL(p || q)`` summed over positions.

    In ``REALIZED_TOKEN`` mode only the entry of each column indexed by
    ``realized[t]`` contributes, which can make individual terms negative.
    """
    _check_same_shape(p, q)
    mode = ScoreMode(mode)
    if mode is ScoreMode.FULL_VOCAB:
        per = kl_columns(p.probs, q.probs)
    else:
        if realized is None:
            raise ArgumentError("realized-token mode needs the realized token sequence")
        idx = np.asarray(realized, dtype=np.int64)
        if idx.shape != (p.length,):
            raise DimensionError(f"realized sequence has length {idx.size}, expected {p.length}")
        if np.any(idx < 0) or np.any(idx >= p.vocab_size):
            raise DomainError("realized token index out of vocabulary range")
        cols = np.arange(p.length)
        pv = p.probs[idx, cols]
        per = pv * log_ratio(pv, q.probs[idx, cols])
    per_t = tuple(float(x) for x in per)
    return KlScore(total=math.fsum(per_t), per_position=per_t, mode=mode)


def entropy(p):
    return float(-np.sum(p.probs * np.log(p.probs)))


def cross_entropy(p, q):
    _check_same_shape(p, q)
    return float(-np.sum(p.probs * np.log(q.probs)))


def mix(spec):
    par, ev = spec.parametric, spec.evidence_only
    _check_same_shape(par, ev)
    return TokenDistribution((1.0 - spec.eta) * par.probs + spec.eta * ev.probs)


def collapse_bound(eta, t_len=1):
    """Upper bound ``t_len * eta**2 / (2 * (1 - eta))`` on the collapsed KL score."""
    if not 0.0 <= eta <= 0.5:
        raise DomainError(f"collapse bound requires 0 <= eta <= 0.5, got {eta}")
    if t_len < 1:
        raise DomainError("t_len must be positive")
    return t_len * eta * eta / (2.0 * (1.0 - eta))


def chi_square_divergence(q, p):
    _check_same_shape(q, p)
    return float(np.sum(chi_square_columns(q.probs, p.probs)))
