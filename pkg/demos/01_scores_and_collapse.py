"""KL scores between the two paths, and how they shrink when retrieval barely matters."""

import numpy as np

from repcs import MixtureSpec, TokenDistribution, collapse_bound, kl_divergence, mix
from repcs.dist import random_simplex

rng = np.random.default_rng(0)
V, T = 50, 16

para = TokenDistribution.from_probs(random_simplex(rng, V, T, 5.0))
evidence = TokenDistribution.from_probs(random_simplex(rng, V, T, 5.0))
print("parametric path:", para.shape, "columns sum to", para.probs.sum(axis=0)[:3], "...")

# the retrieval-augmented path is a mixture; eta is how much the passages move it
print(f"{'eta':>6} {'Z':>10} {'bound':>10}")
for eta in (0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5):
    rag = mix(MixtureSpec(eta, para, evidence))
    z = kl_divergence(rag, para).total
    print(f"{eta:6.2f} {z:10.5f} {collapse_bound(eta, T):10.5f}")

# per-position contributions are available for inspection
score = kl_divergence(mix(MixtureSpec(0.7, para, evidence)), para)
print("per-position KL at eta=0.7:", np.round(score.per_position, 4))

# sharp (low-concentration) distributions break the quadratic bound
sharp_p = TokenDistribution.from_probs(random_simplex(rng, V, T, 0.2))
sharp_q = TokenDistribution.from_probs(random_simplex(rng, V, T, 0.2))
z = kl_divergence(mix(MixtureSpec(0.3, sharp_p, sharp_q)), sharp_p).total
print(f"sharp pair at eta=0.3: Z={z:.3f} vs bound {collapse_bound(0.3, T):.3f}")
