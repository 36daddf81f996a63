import math

from scipy.stats import binom, norm


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    z = norm.ppf(0.5 + confidence / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def consistent_with_bound(successes, trials, bound, confidence=0.95):
    """True unless the observed frequency is significantly above ``bound``."""
    lo, _ = wilson_interval(successes, trials, confidence)
    return bool(lo <= bound)


def binomial_floor(trials, p_success, confidence=0.95):
    """Smallest success count not rejected at the given one-sided confidence."""
    return int(binom.ppf(1.0 - confidence, trials, p_success))
