"""Capture dual-path outputs to JSONL, then score them offline."""

import os
import tempfile

from repcs.backends import ReplayBackend, SyntheticBackend, make_population, write_replay
from repcs.detector import score_output
from repcs.evalkit import noise_sweep

live = SyntheticBackend(vocab=30, t_len=8, seed=5)
stream = [(c, live.dual_pass(c)) for c in make_population(100, 100, seed=3)]

path = os.path.join(tempfile.mkdtemp(), "capture.jsonl")
write_replay(path, stream)
print("wrote", path, os.path.getsize(path) // 1024, "KiB")

replay = ReplayBackend(path)
print("fingerprint:", replay.fingerprint)
for case in replay.cases()[:3] + replay.cases()[-3:]:
    print(f"{case.query_id:>16} {case.label.value:>13} Z={score_output(replay.dual_pass(case)).total:.4f}")

# log-prob noise on both paths; sigma 0 is the untouched baseline
for sigma, auc in noise_sweep([(c, replay.dual_pass(c)) for c in replay.cases()], seed=0):
    print(f"sigma={sigma:.2f}  AUC={auc:.4f}")
