"""Synthetic dual-path source with known retrieval influence.

Both the parametric distribution and the evidence-only distribution are
drawn column-by-column from a symmetric Dirichlet; the retrieval-augmented
path is their mixture at the case's ``true_eta``.
"""

from __future__ import annotations

import hashlib
import time

import numpy as np

from ..dist import MixtureSpec, TokenDistribution, mix, random_simplex, smooth
from ..errors import ArgumentError, DomainError
from .base import DualPathOutput, Label, QueryCase, greedy_anchor

DEFAULT_CONCENTRATION = 5.0
CLEAN_ETA = (0.5, 0.9)
MEMORISED_ETA = (0.01, 0.1)


def stable_hash(text):
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def case_rng(seed, query_id):
    return np.random.default_rng([int(seed), stable_hash(query_id)])


def synthetic_generate(case, vocab=50, t_len=16, seed=0, concentration=DEFAULT_CONCENTRATION):
    if case.true_eta is None:
        raise ArgumentError(f"{case.query_id}: synthetic generation needs true_eta")
    if vocab < 2 or t_len < 1:
        raise DomainError("need vocab >= 2 and t_len >= 1")
    rng = case_rng(seed, case.query_id)

    t0 = time.perf_counter()
    para = TokenDistribution(smooth(random_simplex(rng, vocab, t_len, concentration)))
    t1 = time.perf_counter()
    evidence = TokenDistribution(smooth(random_simplex(rng, vocab, t_len, concentration)))
    rag = mix(MixtureSpec(case.true_eta, para, evidence))
    t2 = time.perf_counter()

    return DualPathOutput(
        rag=rag,
        parametric=para,
        anchor_tokens=greedy_anchor(rag),
        rag_latency=t2 - t1,
        para_latency=t1 - t0,
        meta={"source": "synthetic", "true_eta": case.true_eta},
    )


class SyntheticBackend:
    def __init__(self, vocab=50, t_len=16, seed=0, concentration=DEFAULT_CONCENTRATION):
        self.vocab = vocab
        self.t_len = t_len
        self.seed = seed
        self.concentration = concentration

    @property
    def fingerprint(self):
        return f"synthetic:V={self.vocab},T={self.t_len},conc={self.concentration}"

    def dual_pass(self, case):
        return synthetic_generate(case, self.vocab, self.t_len, self.seed, self.concentration)


def make_population(
    n_clean,
    n_memorised,
    seed=0,
    clean_eta=CLEAN_ETA,
    memorised_eta=MEMORISED_ETA,
    paraphrased_fraction=0.2,
    prefix="q",
):
    """Labelled synthetic queries, clean first then memorised.

    A ``paraphrased_fraction`` of the memorised cases carry the paraphrased
    label; they share the memorised influence regime.
    """
    rng = np.random.default_rng([int(seed), 0x5EED])
    cases = []
    for i, eta in enumerate(rng.uniform(*clean_eta, size=n_clean)):
        cases.append(QueryCase(f"{prefix}-clean-{i:06d}", label=Label.CLEAN, true_eta=float(eta)))
    etas = rng.uniform(*memorised_eta, size=n_memorised)
    para = rng.random(n_memorised) < paraphrased_fraction
    for i, (eta, is_para) in enumerate(zip(etas, para)):
        label = Label.PARAPHRASED if is_para else Label.CONTAMINATED
        cases.append(QueryCase(f"{prefix}-mem-{i:06d}", label=label, true_eta=float(eta)))
    return cases
