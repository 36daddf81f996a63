"""Monte Carlo checks of the detector's statistical guarantees.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentReport` whose ``tables`` hold the figure-ready CSV data.
Points flagged ``informational`` are reported but do not affect
``overall_pass``.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from ..calibrate import dkw_halfwidth, fit_threshold, required_sample_size
from ..dist import collapse_bound, log_ratio, random_simplex, smooth
from ..errors import ConfigurationError, DomainError
from . import minimax
from .config import ExperimentConfig, ExperimentReport, PointResult
from .populations import chunked, mixture_scores, population, rng_for
from .stats import binomial_floor, consistent_with_bound, wilson_interval

# stream tags keep the experiments' random draws disjoint
_COLLAPSE, _SUBG, _FINITE, _BATCH, _ADAPT, _MINIMAX, _GAP = range(1, 8)

COLLAPSE_TOL = 1e-9


def run_collapse(config):
    if any(e > 0.5 for e in config.eta_grid):
        raise DomainError("collapse bound only holds for eta <= 0.5")
    T = config.t_len
    points, rows = [], []
    for i, eta in enumerate(config.eta_grid):
        z, _, _, chi2 = chunked(
            config,
            config.trials,
            lambda rng, size, eta=eta: mixture_scores(rng, size, config.vocab, T, eta, config.concentration),
            _COLLAPSE,
            i,
        )
        bound = collapse_bound(eta, T)
        # always-valid curvature bound: KL <= chi2(Q||P) * (eta + (1-eta) ln(1-eta))
        curvature = chi2 * (eta + (1.0 - eta) * math.log1p(-eta))
        violations = int(np.sum(z > bound + COLLAPSE_TOL))
        observed = {
            "mean_kl": float(z.mean()),
            "max_kl": float(z.max()),
            "violations": violations,
            "max_ratio_to_bound": float(z.max() / bound) if bound > 0 else 0.0,
            "curvature_violations": int(np.sum(z > curvature + COLLAPSE_TOL)),
            "instances_chi2_above_T": int(np.sum(chi2 > T)),
        }
        points.append(
            PointResult({"eta": eta, "trials": config.trials}, observed, {"bound": bound}, violations == 0)
        )
        rows.append((eta, observed["mean_kl"], observed["max_kl"], bound))
    return ExperimentReport(
        "collapse",
        config,
        points,
        summary={"total_violations": sum(p.observed["violations"] for p in points)},
        tables={"collapse": (["eta", "mean_kl", "max_kl", "bound"], rows)},
    )


def _tilted_scores(rng, size, vocab, t_len, gamma, concentration):
    """Pairs whose log-ratios are bounded by ``gamma`` by construction."""
    para = smooth(random_simplex(rng, vocab, t_len, concentration, size=size))
    w = para * np.exp(rng.uniform(-gamma / 2, gamma / 2, size=para.shape))
    rag = w / w.sum(axis=-2, keepdims=True)
    lr = log_ratio(rag, para)
    return np.sum(rag * lr, axis=(-2, -1)), np.max(np.abs(lr), axis=(-2, -1))


def subgaussian_tail_bound(t, gamma, t_len):
    return 2.0 * math.exp(-(t**2) / (4.0 * gamma**2 * t_len))


def run_subgaussian(config):
    if config.gamma <= 0:
        raise DomainError("gamma must be positive")
    g, T = config.gamma, config.t_len
    z, lr_max = chunked(
        config, config.trials, lambda rng, size: _tilted_scores(rng, size, config.vocab, T, g, config.concentration), _SUBG
    )
    dev = np.abs(z - z.mean())
    sd = float(z.std())
    scale = g * math.sqrt(T)
    grid = [0.0, sd, 2 * sd, 3 * sd, scale, 2 * scale]
    points, rows = [], []
    for t in grid:
        count = int(np.sum(dev > t))
        bound = subgaussian_tail_bound(t, g, T)
        lo, hi = wilson_interval(count, config.trials, config.confidence)
        ok = consistent_with_bound(count, config.trials, bound, config.confidence)
        points.append(
            PointResult({"t": t}, {"tail": count / config.trials, "wilson_lo": lo, "wilson_hi": hi}, {"bound": bound}, ok)
        )
        rows.append((t, count / config.trials, bound))
    points.append(
        PointResult(
            {"gamma": g},
            {"max_abs_log_ratio": float(lr_max.max())},
            {"gamma": g},
            bool(lr_max.max() <= g + 1e-12),
        )
    )
    return ExperimentReport(
        "subgaussian",
        config,
        points,
        summary={"mean_z": float(z.mean()), "sd_z": sd},
        tables={"subgaussian": (["t", "empirical_tail", "bound"], rows)},
    )


def _pools(config, tag):
    clean = population(config, config.pool_size, config.clean_eta, tag, 0)
    mem = population(config, config.pool_size, config.memorised_eta, tag, 1)
    delta_hat = float(clean.z.mean() - mem.z.mean())
    if delta_hat < config.delta:
        raise ConfigurationError(
            f"populations realize a gap of {delta_hat:.4f} nat, below the requested {config.delta}"
        )
    # gamma is estimated the way a deployment would: on the clean calibration pairs
    gamma_hat = float(clean.gamma[: config.n_calibration].max())
    return clean, mem, delta_hat, gamma_hat


def _guarantee_point(config, name, n, outcomes, informational=False):
    """Summarise per-repeat ``(fpr, fnr)`` against the FPR/FNR targets."""
    fpr = np.array([o[0] for o in outcomes])
    fnr = np.array([o[1] for o in outcomes])
    slack = dkw_halfwidth(n, config.epsilon)
    strict = int(np.sum((fpr <= config.alpha) & (fnr <= config.epsilon)))
    relaxed = int(np.sum((fpr <= config.alpha + slack) & (fnr <= config.epsilon)))
    floor = binomial_floor(config.repeats, 1.0 - config.epsilon, config.confidence)
    return PointResult(
        {"variant": name, "n": n, "repeats": config.repeats},
        {
            "successes": strict,
            "successes_within_dkw": relaxed,
            "mean_fpr": float(fpr.mean()),
            "max_fpr": float(fpr.max()),
            "mean_fnr": float(fnr.mean()),
            "max_fnr": float(fnr.max()),
        },
        {"alpha": config.alpha, "epsilon": config.epsilon, "dkw_width": slack, "min_successes": floor},
        strict >= floor,
        informational,
    ), [(name, r, float(a), float(b)) for r, (a, b) in enumerate(outcomes)]


def run_finite_sample(config):
    if config.delta <= 0:
        raise DomainError("delta must be positive")
    clean, mem, delta_hat, gamma_hat = _pools(config, _FINITE)
    n = required_sample_size(gamma_hat, config.t_len, delta_hat, config.epsilon)
    outcomes = []
    for r in range(config.repeats):
        rng = rng_for(config.seed, _FINITE, 2, r)
        tau = fit_threshold(clean.sample(rng, n), config.alpha)
        outcomes.append((clean.frac_below(tau), 1.0 - mem.frac_below(tau)))
    strict, rows = _guarantee_point(config, "nonadaptive", n, outcomes)
    relaxed = replace(
        strict,
        inputs={**strict.inputs, "variant": "nonadaptive_dkw_tolerance"},
        passed=strict.observed["successes_within_dkw"] >= strict.bound["min_successes"],
        informational=True,
    )
    return ExperimentReport(
        "finite_sample",
        config,
        [strict, relaxed],
        summary={"delta_hat": delta_hat, "gamma_hat": gamma_hat, "n": n},
        tables={"finite_sample": (["variant", "repeat", "fpr", "fnr"], rows)},
    )


def batch_sizes(batch_m):
    ms = [10**k for k in range(int(math.log10(batch_m)) + 1)]
    if ms[-1] != batch_m:
        ms.append(batch_m)
    return ms


def run_uniform_batch(config):
    clean = population(config, config.pool_size, config.clean_eta, _BATCH, 0)
    n_cal = config.n_calibration
    k = min(max(math.ceil(config.alpha * n_cal) - 1, 0), n_cal - 1)
    points, rows = [], []
    for j, m in enumerate(batch_sizes(config.batch_m)):

        def fn(rng, size, m=m):
            cal = clean.z[rng.integers(0, clean.size, size=(size, n_cal))]
            tau = np.partition(cal, k, axis=1)[:, k]
            batch = clean.z[rng.integers(0, clean.size, size=(size, m))]
            return np.any(batch < tau[:, None], axis=1)

        exceed = chunked(replace(config, chunk=min(config.chunk, 500)), config.n_batches, fn, _BATCH, 1, j)
        count = int(exceed.sum())
        bound = min(1.0, m * config.alpha)
        lo, hi = wilson_interval(count, config.n_batches, config.confidence)
        points.append(
            PointResult(
                {"M": m, "batches": config.n_batches},
                {"exceedance": count / config.n_batches, "wilson_lo": lo, "wilson_hi": hi},
                {"union_bound": bound, "inverse_M": 1.0 / m},
                consistent_with_bound(count, config.n_batches, bound, config.confidence),
            )
        )
        rows.append((m, count / config.n_batches, bound, 1.0 / m))
    return ExperimentReport(
        "uniform_batch",
        config,
        points,
        tables={"uniform_batch": (["M", "empirical_exceedance", "union_bound", "inverse_M"], rows)},
    )


def _arms(mem, config):
    lo, hi = config.memorised_eta
    width = (hi - lo) or 1.0
    idx = np.clip(((mem.eta - lo) / width * config.adversary_arms).astype(int), 0, config.adversary_arms - 1)
    return [np.flatnonzero(idx == a) for a in range(config.adversary_arms) if np.any(idx == a)]


def adversary_miss_rate(rng, mem, arms, tau, n_queries, feedback=True):
    """Fraction of memorised queries that evade the threshold.

    With feedback the attacker sees each submitted query's score (never the
    distributions or tau) and greedily resubmits from the arm with the
    highest mean observed score after trying every arm once.
    """
    k = len(arms)
    sums = np.zeros(k)
    counts = np.zeros(k)
    missed = 0
    for i in range(n_queries):
        if not feedback:
            a = int(rng.integers(k))
        elif i < k:
            a = i
        else:
            a = int(np.argmax(sums / counts))
        pick = arms[a][rng.integers(arms[a].size)]
        z = mem.z[pick]
        sums[a] += z
        counts[a] += 1
        missed += z >= tau
    return missed / n_queries


def run_adaptive(config):
    clean, mem, delta_hat, gamma_hat = _pools(config, _ADAPT)
    arms = _arms(mem, config)
    n_full = required_sample_size(gamma_hat, config.t_len, delta_hat, config.epsilon)
    n_half = required_sample_size(gamma_hat, config.t_len, delta_hat / 2.0, config.epsilon)
    variants = [
        ("adaptive_half_gap", n_half, True, False),
        ("adaptive_full_gap", n_full, True, True),
        ("random_full_gap", n_full, False, True),
    ]
    points, rows = [], []
    for v, (name, n, feedback, info) in enumerate(variants):
        outcomes = []
        for r in range(config.repeats):
            rng = rng_for(config.seed, _ADAPT, 2, v, r)
            tau = fit_threshold(clean.sample(rng, n), config.alpha)
            fnr = adversary_miss_rate(rng, mem, arms, tau, config.adversary_queries, feedback)
            outcomes.append((clean.frac_below(tau), fnr))
        point, vrows = _guarantee_point(config, name, n, outcomes, informational=info)
        points.append(point)
        rows.extend(vrows)
    strict = points[0]
    points.append(
        replace(
            strict,
            inputs={**strict.inputs, "variant": "adaptive_half_gap_dkw_tolerance"},
            passed=strict.observed["successes_within_dkw"] >= strict.bound["min_successes"],
            informational=True,
        )
    )
    return ExperimentReport(
        "adaptive",
        config,
        points,
        summary={"delta_hat": delta_hat, "gamma_hat": gamma_hat, "n_full_gap": n_full, "n_half_gap": n_half},
        tables={"adaptive": (["variant", "repeat", "fpr", "fnr"], rows)},
    )


def run_minimax_small(config):
    if config.vocab > minimax.MAX_VOCAB or config.t_len > minimax.MAX_LEN:
        raise DomainError(
            f"exhaustive regime needs vocab <= {minimax.MAX_VOCAB} and t_len <= {minimax.MAX_LEN}"
        )
    points, rows = [], []
    # two-point instances (one query per instance) carry the criterion; instances mixing
    # queries of different evidence informativeness are reported alongside
    for family, queries, info in (("two_point", 1, False), ("heterogeneous", None, True)):
        ratios = []
        for i in range(config.minimax_instances):
            rng = rng_for(config.seed, _MINIMAX, queries or 0, i)
            inst = minimax.random_instance(rng, config.vocab, config.t_len, config.concentration)
            if queries is not None:
                inst = replace(inst, parametric=inst.parametric[:queries], evidence=inst.evidence[:queries])
            bayes = minimax.bayes_risk(inst)
            kl = minimax.kl_rule_risk(inst)
            ratio = minimax.risk_ratio(kl, bayes)
            ratios.append(ratio)
            ok = kl <= config.minimax_factor * bayes + 1e-12
            points.append(
                PointResult(
                    {"family": family, "instance": i, "shape": list(inst.parametric.shape)},
                    {"bayes_risk": bayes, "kl_rule_risk": kl, "ratio": ratio},
                    {"factor": config.minimax_factor},
                    ok,
                    informational=info,
                )
            )
            rows.append((family, i, bayes, kl, ratio))
    return ExperimentReport(
        "minimax",
        config,
        points,
        summary={
            fam: {
                "max_ratio": max(r[4] for r in rows if r[0] == fam),
                "failures": sum(1 for p in points if p.inputs["family"] == fam and not p.passed),
            }
            for fam in ("two_point", "heterogeneous")
        },
        tables={"minimax": (["family", "instance", "bayes_risk", "kl_rule_risk", "ratio"], rows)},
    )


def run_gap_histogram(config):
    mem = population(config, config.trials, config.memorised_eta, _GAP, 0)
    clean = population(config, config.trials, config.clean_eta, _GAP, 1)
    delta_hat = float(clean.z.mean() - mem.z.mean())
    edges = np.histogram_bin_edges(np.concatenate([mem.z, clean.z]), bins=config.hist_bins)
    cm, _ = np.histogram(mem.z, bins=edges)
    cc, _ = np.histogram(clean.z, bins=edges)
    rows = [(float(lo), float(hi), int(a), int(b)) for lo, hi, a, b in zip(edges[:-1], edges[1:], cm, cc)]
    point = PointResult(
        {"memorised_eta": list(config.memorised_eta), "clean_eta": list(config.clean_eta)},
        {"delta_hat": delta_hat, "mean_memorised": float(mem.z.mean()), "mean_clean": float(clean.z.mean())},
        {"delta_required": config.delta},
        delta_hat > 0,
    )
    return ExperimentReport(
        "gap_histogram",
        config,
        [point],
        summary={"delta_hat": delta_hat, "meets_requested_gap": delta_hat >= config.delta},
        tables={"gap_histogram": (["bin_lo", "bin_hi", "count_memorised", "count_clean"], rows)},
    )


REGISTRY = {
    "collapse": run_collapse,
    "subgaussian": run_subgaussian,
    "finite_sample": run_finite_sample,
    "uniform_batch": run_uniform_batch,
    "adaptive": run_adaptive,
    "minimax": run_minimax_small,
    "gap_histogram": run_gap_histogram,
}

# desk-scale defaults per experiment, applied on top of ExperimentConfig()
DEFAULTS = {
    "subgaussian": {"trials": 50_000},
    "minimax": {"vocab": minimax.MAX_VOCAB, "t_len": minimax.MAX_LEN},
}


def default_config(name, **overrides):
    if name not in REGISTRY:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(REGISTRY)}")
    return ExperimentConfig(**{**DEFAULTS.get(name, {}), **overrides})


def run(name, config=None, **overrides):
    cfg = config if config is not None else default_config(name, **overrides)
    return REGISTRY[name](cfg)
