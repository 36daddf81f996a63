"""Vectorised synthetic score populations.

Work is split into fixed-size chunks, each seeded from ``(seed, tag, *keys,
chunk_index)``, so results do not depend on how chunks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..dist import chi_square_columns, log_ratio, random_simplex, smooth


def rng_for(seed, *keys):
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def chunked(config, n, fn, *keys):
    """Apply ``fn(rng, size)`` over chunks of ``n`` and concatenate each output."""
    sizes = [min(config.chunk, n - start) for start in range(0, n, config.chunk)]

    def task(i):
        return fn(rng_for(config.seed, *keys, i), sizes[i])

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(task, range(len(sizes))))
    else:
        parts = [task(i) for i in range(len(sizes))]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(cols) for cols in zip(*parts))
    return np.concatenate(parts)


def mixture_scores(rng, size, vocab, t_len, eta, concentration):
    """Scores of ``size`` random mixtures; ``eta`` is a scalar or a length-``size`` array.

    Returns ``(z, eta, gamma, chi2)``: the KL score, the mixing weight, the
    largest absolute log-ratio, and the summed per-position chi-square of the
    evidence distribution against the parametric one.
    """
    para = smooth(random_simplex(rng, vocab, t_len, concentration, size=size))
    evidence = smooth(random_simplex(rng, vocab, t_len, concentration, size=size))
    eta = np.broadcast_to(np.asarray(eta, dtype=np.float64), (size,))
    w = eta[:, None, None]
    rag = (1.0 - w) * para + w * evidence
    lr = log_ratio(rag, para)
    z = np.sum(rag * lr, axis=(-2, -1))
    gamma = np.max(np.abs(lr), axis=(-2, -1))
    chi2 = np.sum(chi_square_columns(evidence, para), axis=-1)
    return z, np.array(eta), gamma, chi2


@dataclass
class Population:
    z: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.sorted_z = np.sort(self.z)

    @property
    def size(self):
        return self.z.size

    def frac_below(self, tau):
        """Exact population probability of ``Z < tau``."""
        return np.searchsorted(self.sorted_z, tau, side="left") / self.size

    def sample(self, rng, n):
        return self.z[rng.integers(0, self.size, size=n)]


def population(config, n, eta_range, *keys):
    lo, hi = eta_range

    def fn(rng, size):
        eta = rng.uniform(lo, hi, size=size)
        z, eta, gamma, _ = mixture_scores(rng, size, config.vocab, config.t_len, eta, config.concentration)
        return z, eta, gamma

    z, eta, gamma = chunked(config, n, fn, *keys)
    return Population(z, eta, gamma)
