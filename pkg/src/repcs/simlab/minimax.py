"""Exact Bayes risk versus the KL-threshold rule on tiny discrete instances.

An instance is a two-hypothesis problem.  A query is drawn uniformly from a
handful of ``(parametric, evidence)`` pairs, and its influence weight is drawn
from a finite grid with a hypothesis-dependent prior (memorised queries put
mass on small weights, clean ones on large weights).  A two-pass black-box
detector observes the pair ``(P_rag, P_para)``; outcomes are enumerated
exhaustively, so both risks are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dist import kl_columns, random_simplex, smooth
from ..errors import DomainError

MAX_VOCAB = 8
MAX_LEN = 4
KEY_DECIMALS = 12


@dataclass(frozen=True)
class MinimaxInstance:
    parametric: np.ndarray  # (J, V, T)
    evidence: np.ndarray  # (J, V, T)
    etas: np.ndarray  # (K,)
    prior_memorised: np.ndarray  # (K,), weights over etas under H0
    prior_clean: np.ndarray  # (K,), weights over etas under H1
    p_memorised: float = 0.5

    def __post_init__(self):
        _, v, t = self.parametric.shape
        if v > MAX_VOCAB or t > MAX_LEN:
            raise DomainError(f"exhaustive enumeration limited to V<={MAX_VOCAB}, T<={MAX_LEN}; got V={v}, T={t}")

    def outcomes(self):
        """Yield ``(observation_key, kl_score, mass_h0, mass_h1)`` for every outcome."""
        n_queries = self.parametric.shape[0]
        for j in range(n_queries):
            para = self.parametric[j]
            for k, eta in enumerate(self.etas):
                rag = (1.0 - eta) * para + eta * self.evidence[j]
                # rounding keeps float noise from making equal observations distinct
                key = np.round(rag, KEY_DECIMALS).tobytes() + np.round(para, KEY_DECIMALS).tobytes()
                z = float(np.sum(kl_columns(rag, para)))
                yield key, z, self.prior_memorised[k] / n_queries, self.prior_clean[k] / n_queries


def bayes_risk(inst):
    """Risk of the likelihood-ratio test over all distinct observations."""
    mass = {}
    for key, _, m0, m1 in inst.outcomes():
        a, b = mass.get(key, (0.0, 0.0))
        mass[key] = (a + m0, b + m1)
    pi0 = inst.p_memorised
    return float(sum(min(pi0 * a, (1.0 - pi0) * b) for a, b in mass.values()))


def kl_rule_risk(inst):
    """Best achievable risk of "flag memorised iff Z < tau" over all tau."""
    pi0 = inst.p_memorised
    rows = sorted((z, pi0 * m0, (1.0 - pi0) * m1) for _, z, m0, m1 in inst.outcomes())
    z = np.array([r[0] for r in rows])
    w0 = np.array([r[1] for r in rows])
    w1 = np.array([r[2] for r in rows])
    # candidate cuts: flag the first i outcomes, only where a threshold can separate them
    cuts = [0] + [i for i in range(1, len(z)) if z[i] > z[i - 1]] + [len(z)]
    c0 = np.concatenate([[0.0], np.cumsum(w0)])
    c1 = np.concatenate([[0.0], np.cumsum(w1)])
    total0 = c0[-1]
    # flagged clean mass + unflagged memorised mass
    return float(min(c1[i] + (total0 - c0[i]) for i in cuts))


def random_instance(rng, max_vocab=MAX_VOCAB, max_len=MAX_LEN, concentration=5.0, n_etas=6):
    v = int(rng.integers(2, max_vocab + 1))
    t = int(rng.integers(1, max_len + 1))
    j = int(rng.integers(1, 5))
    para = smooth(random_simplex(rng, v, t, concentration, size=j))
    evidence = smooth(random_simplex(rng, v, t, concentration, size=j))
    etas = np.sort(rng.uniform(0.01, 0.95, size=n_etas))
    sharpness = rng.uniform(2.0, 10.0)
    w0 = np.exp(-sharpness * etas)
    w1 = np.exp(sharpness * etas)
    return MinimaxInstance(para, evidence, etas, w0 / w0.sum(), w1 / w1.sum())


def risk_ratio(kl_risk, bayes, tol=1e-12):
    if bayes <= tol:
        return 1.0 if kl_risk <= tol else float("inf")
    return kl_risk / bayes
