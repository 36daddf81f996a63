"""Detection-quality and cost metrics over score records.

Positives are contaminated or paraphrased queries, negatives are clean ones;
records with an unknown label or without a score are ignored.  Lower scores
mean "more memorised", so every ranking below sorts ascending by score.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .backends.base import DualPathOutput, Label
from .detector import Decision, score_output
from .dist import ScoreMode, TokenDistribution, smooth
from .errors import ArgumentError, DomainError

DEFAULT_NOISE_SIGMAS = (0.0, 0.02, 0.05, 0.10)


def _labelled(records):
    z, pos, ids = [], [], []
    for r in records:
        if r.z is None or r.label is Label.UNKNOWN:
            continue
        z.append(r.z.total)
        pos.append(r.label.is_positive)
        ids.append(r.query_id)
    return np.asarray(z, dtype=np.float64), np.asarray(pos, dtype=bool), ids


def _need_both(pos):
    if pos.all() or not pos.any():
        raise ArgumentError("metric needs at least one positive and one clean record")


def auc_from_scores(z, pos):
    """Mann-Whitney AUC for "lower score means positive", ties worth one half."""
    z = np.asarray(z, dtype=np.float64)
    pos = np.asarray(pos, dtype=bool)
    _need_both(pos)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    ranks = rankdata(z)
    u = ranks[~pos].sum() - n_neg * (n_neg + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(records):
    z, pos, _ = _labelled(records)
    return auc_from_scores(z, pos)


def precision_at_k(records, k):
    z, pos, ids = _labelled(records)
    if not 1 <= k <= z.size:
        raise ArgumentError(f"k must lie in [1, {z.size}], got {k}")
    order = sorted(range(z.size), key=lambda i: (z[i], ids[i]))
    return float(pos[order[:k]].sum() / k)


def _cumulative_rates(z, pos):
    """TPR/FPR when flagging every score <= each distinct value."""
    values = np.unique(z)
    npos, nneg = pos.sum(), (~pos).sum()
    tp = np.searchsorted(np.sort(z[pos]), values, side="right")
    fp = np.searchsorted(np.sort(z[~pos]), values, side="right")
    return values, tp, fp, npos, nneg


def fpr_at_tpr(records, tpr_target=0.95):
    """FPR at the smallest threshold whose ``Z < threshold`` rule reaches the target TPR."""
    if not 0.0 < tpr_target <= 1.0:
        raise DomainError(f"tpr_target must lie in (0, 1], got {tpr_target}")
    z, pos, _ = _labelled(records)
    _need_both(pos)
    _, tp, fp, npos, nneg = _cumulative_rates(z, pos)
    j = int(np.argmax(tp >= tpr_target * npos - 1e-9))
    return float(fp[j] / nneg)


def roc_curve(records):
    """ROC points as ``(threshold, fpr, tpr)``, starting from the empty flag set."""
    z, pos, _ = _labelled(records)
    _need_both(pos)
    values, tp, fp, npos, nneg = _cumulative_rates(z, pos)
    pts = [(float("-inf"), 0.0, 0.0)]
    pts += [(float(v), float(f / nneg), float(t / npos)) for v, t, f in zip(values, tp, fp)]
    return pts


def confusion(records, tau):
    """``(tp, fp, tn, fn)`` for the rule ``Z < tau`` flags memorised."""
    z, pos, _ = _labelled(records)
    flagged = z < tau
    tp = int(np.sum(flagged & pos))
    fp = int(np.sum(flagged & ~pos))
    tn = int(np.sum(~flagged & ~pos))
    fn = int(np.sum(~flagged & pos))
    return tp, fp, tn, fn


def confusion_from_decisions(records):
    tp = fp = tn = fn = 0
    for r in records:
        if r.decision is None or r.label is Label.UNKNOWN:
            continue
        flagged = r.decision is Decision.MEMORISED
        if r.label.is_positive:
            tp += flagged
            fn += not flagged
        else:
            fp += flagged
            tn += not flagged
    return tp, fp, tn, fn


def latency_overhead(records):
    """Shadow-pass cost as a percentage of the retrieval-augmented pass."""
    recs = [r for r in records if r.z is not None]
    if not recs:
        raise ArgumentError("no scored records")
    rag = np.array([r.rag_latency for r in recs], dtype=np.float64)
    extra = np.array([r.para_latency + r.score_latency for r in recs], dtype=np.float64)
    if rag.mean() <= 0:
        raise ArgumentError("records carry no retrieval-path latency")
    return float(100.0 * extra.mean() / rag.mean())


def perturb_logprobs(dist, sigma, rng):
    """Add centred Gaussian noise to log-probabilities and renormalize."""
    logp = np.log(dist.probs) + rng.normal(0.0, sigma, size=dist.shape)
    logp -= logp.max(axis=0, keepdims=True)
    return TokenDistribution(smooth(np.exp(logp)))


def noise_sweep(source, sigmas=DEFAULT_NOISE_SIGMAS, seed=0, mode=ScoreMode.FULL_VOCAB):
    """AUC after perturbing both paths' log-probs at each noise level.

    ``source`` is a sequence of ``(QueryCase, DualPathOutput)`` pairs.  The
    zero-noise row scores the untouched distributions.
    """
    source = list(source)
    if any(s < 0 for s in sigmas):
        raise DomainError("noise standard deviation must be non-negative")
    keep = [(c, o) for c, o in source if c.label is not Label.UNKNOWN]
    pos = np.array([c.label.is_positive for c, _ in keep])
    _need_both(pos)
    rows = []
    for i, sigma in enumerate(sigmas):
        rng = np.random.default_rng([int(seed), i])
        z = np.empty(len(keep))
        for j, (_, out) in enumerate(keep):
            if sigma == 0:
                z[j] = score_output(out, mode).total
            else:
                rag = perturb_logprobs(out.rag, sigma, rng)
                para = perturb_logprobs(out.parametric, sigma, rng)
                z[j] = score_output(DualPathOutput(rag, para, out.anchor_tokens), mode).total
        rows.append((float(sigma), auc_from_scores(z, pos)))
    return rows


@dataclass
class EvaluationReport:
    roc_auc: float
    precision_at_k: dict
    fpr_at_tpr: dict
    confusion: tuple
    tau: float | None
    latency_overhead_pct: float | None
    n_scored: int
    noise_sweep: list | None = None
    roc_points: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("roc_points")
        d["precision_at_k"] = {str(k): v for k, v in self.precision_at_k.items()}
        d["fpr_at_tpr"] = {str(k): v for k, v in self.fpr_at_tpr.items()}
        d["confusion"] = dict(zip(("tp", "fp", "tn", "fn"), self.confusion))
        return d


def evaluate(records, ks=(10,), tprs=(0.95,), tau=None, noise=None):
    """Compute every metric; ``tau`` defaults to the threshold stored on the records."""
    records = list(records)
    scored = [r for r in records if r.z is not None]
    if tau is None and scored:
        tau = scored[0].tau
    try:
        lat = latency_overhead(scored)
    except ArgumentError:
        lat = None
    return EvaluationReport(
        roc_auc=roc_auc(scored),
        precision_at_k={k: precision_at_k(scored, k) for k in ks if k <= len(scored)},
        fpr_at_tpr={t: fpr_at_tpr(scored, t) for t in tprs},
        confusion=confusion(scored, tau) if tau is not None else (0, 0, 0, 0),
        tau=tau,
        latency_overhead_pct=lat,
        n_scored=len(scored),
        noise_sweep=noise,
        roc_points=roc_curve(scored),
    )


def write_report(report, out_dir):
    """Report JSON plus one CSV per figure (ROC, FPR bars, latency, confusion, noise)."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "evaluation.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)

    def table(name, header, rows):
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    table("roc_curve.csv", ["threshold", "fpr", "tpr"], report.roc_points)
    table("fpr_at_tpr.csv", ["tpr_target", "fpr"], sorted(report.fpr_at_tpr.items()))
    table("latency.csv", ["detector", "overhead_pct"], [("repcs", report.latency_overhead_pct)])
    tp, fp, tn, fn = report.confusion
    table("confusion.csv", ["actual", "flagged", "not_flagged"], [("memorised", tp, fn), ("clean", fp, tn)])
    if report.noise_sweep is not None:
        table("noise_sweep.csv", ["sigma", "roc_auc"], report.noise_sweep)
