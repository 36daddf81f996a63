import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repcs.dist import (
    EPS_FLOOR,
    LOG_RATIO_CAP,
    MixtureSpec,
    ScoreMode,
    TokenDistribution,
    chi_square_divergence,
    collapse_bound,
    cross_entropy,
    entropy,
    kl_columns,
    kl_divergence,
    mix,
    random_simplex,
    smooth,
)
from repcs.errors import ArgumentError, DimensionError, DomainError

mpmath.mp.dps = 50


def col(*values):
    return TokenDistribution.from_probs(np.array(values, dtype=float).reshape(-1, 1))


def mp_kl(p, q):
    return sum(mpmath.mpf(a) * mpmath.log(mpmath.mpf(a) / mpmath.mpf(b)) for a, b in zip(p, q))


# frozen oracle values, computed once with mpmath at 50 digits
KL_73_55 = float(mp_kl([0.7, 0.3], [0.5, 0.5]))
H_73 = float(-(mpmath.mpf("0.7") * mpmath.log("0.7") + mpmath.mpf("0.3") * mpmath.log("0.3")))


def test_oracle_constants_frozen():
    assert KL_73_55 == pytest.approx(0.082282, abs=1e-6)
    assert H_73 == pytest.approx(0.610864, abs=1e-6)


def test_kl_two_point():
    s = kl_divergence(col(0.7, 0.3), col(0.5, 0.5))
    assert s.total == pytest.approx(KL_73_55, abs=1e-12)
    assert s.per_position == pytest.approx((KL_73_55,))
    assert s.mode is ScoreMode.FULL_VOCAB


def test_kl_identity_is_zero():
    rng = np.random.default_rng(1)
    p = TokenDistribution.from_probs(random_simplex(rng, 7, 5))
    assert kl_divergence(p, p).total == 0.0


def test_kl_matches_mpmath_on_random_tensors():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = TokenDistribution.from_probs(random_simplex(rng, 6, 3, 2.0))
        q = TokenDistribution.from_probs(random_simplex(rng, 6, 3, 2.0))
        ref = sum(mp_kl(p.probs[:, t], q.probs[:, t]) for t in range(3))
        assert kl_divergence(p, q).total == pytest.approx(float(ref), abs=1e-12)


def test_realized_token_mode():
    p = TokenDistribution.from_probs(np.array([[0.7, 0.2], [0.3, 0.8]]))
    q = TokenDistribution.uniform(2, 2)
    s = kl_divergence(p, q, ScoreMode.REALIZED_TOKEN, realized=[0, 0])
    expect = [0.7 * math.log(1.4), 0.2 * math.log(0.4)]
    assert s.per_position == pytest.approx(expect, abs=1e-12)
    assert s.per_position[1] < 0
    assert s.total == pytest.approx(sum(expect), abs=1e-12)


def test_kl_errors():
    a = TokenDistribution.uniform(3, 2)
    with pytest.raises(DimensionError):
        kl_divergence(a, TokenDistribution.uniform(3, 3))
    with pytest.raises(ArgumentError):
        kl_divergence(a, a, ScoreMode.REALIZED_TOKEN)
    with pytest.raises(DimensionError):
        kl_divergence(a, a, ScoreMode.REALIZED_TOKEN, realized=[0])
    with pytest.raises(DomainError):
        kl_divergence(a, a, "realized", realized=[0, 3])


def test_entropy_values():
    assert entropy(col(0.7, 0.3)) == pytest.approx(H_73, abs=1e-9)
    assert entropy(TokenDistribution.uniform(4, 1)) == pytest.approx(math.log(4), abs=1e-12)
    assert entropy(col(1.0, 0.0)) == pytest.approx(0.0, abs=1e-10)


def test_cross_entropy_values():
    u = TokenDistribution.uniform(2, 1)
    assert cross_entropy(u, u) == pytest.approx(math.log(2), abs=1e-12)
    assert cross_entropy(col(0.7, 0.3), u) == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(DimensionError):
        cross_entropy(u, TokenDistribution.uniform(3, 1))


def test_mix_endpoints_bit_exact_and_midpoint():
    rng = np.random.default_rng(3)
    par = TokenDistribution.from_probs(random_simplex(rng, 5, 4))
    ev = TokenDistribution.from_probs(random_simplex(rng, 5, 4))
    assert np.array_equal(mix(MixtureSpec(0.0, par, ev)).probs, par.probs)
    assert np.array_equal(mix(MixtureSpec(1.0, par, ev)).probs, ev.probs)
    mid = mix(MixtureSpec(0.5, col(1.0, 0.0), col(0.0, 1.0)))
    assert mid.probs[:, 0] == pytest.approx([0.5, 0.5], abs=1e-12)


def test_mix_errors():
    u = TokenDistribution.uniform(2, 1)
    with pytest.raises(DomainError):
        MixtureSpec(1.5, u, u)
    with pytest.raises(DimensionError):
        mix(MixtureSpec(0.3, u, TokenDistribution.uniform(3, 1)))


def test_collapse_bound_values():
    assert collapse_bound(0.0, 7) == 0.0
    assert collapse_bound(0.1, 1) == pytest.approx(0.005556, abs=1e-6)
    assert collapse_bound(0.5, 1) == pytest.approx(0.25, abs=1e-15)
    assert collapse_bound(0.2, 16) == pytest.approx(16 * 0.04 / 1.6)
    with pytest.raises(DomainError):
        collapse_bound(0.51)


def test_appendix_spot_value_within_five_millinats():
    rng = np.random.default_rng(4)
    for _ in range(50):
        par = TokenDistribution.from_probs(random_simplex(rng, 50, 4, 5.0))
        ev = TokenDistribution.from_probs(random_simplex(rng, 50, 4, 5.0))
        z = kl_divergence(mix(MixtureSpec(0.1, par, ev)), par).total
        assert z <= 5e-3 * 4 + 1e-9


def test_chi_square_values():
    assert chi_square_divergence(col(0.6, 0.4), col(0.5, 0.5)) == pytest.approx(0.04, abs=1e-12)
    u = TokenDistribution.uniform(3, 2)
    assert chi_square_divergence(u, u) == 0.0


def test_chi_square_dominates_kl():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        q = TokenDistribution.from_probs(random_simplex(rng, 5, 2))
        p = TokenDistribution.from_probs(random_simplex(rng, 5, 2))
        assert chi_square_divergence(q, p) >= kl_divergence(q, p).total - 1e-12


def test_cross_entropy_identity_1000_pairs():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        v, t = rng.integers(2, 30), rng.integers(1, 10)
        p = TokenDistribution.from_probs(random_simplex(rng, v, t, 0.5))
        q = TokenDistribution.from_probs(random_simplex(rng, v, t, 0.5))
        assert cross_entropy(p, q) - entropy(p) == pytest.approx(kl_divergence(p, q).total, abs=1e-9)


def test_collapse_holds_on_10000_instances():
    """Vectorised check of the collapse bound at the default concentration."""
    rng = np.random.default_rng(7)
    n, v, t = 10_000, 50, 16
    eta = rng.uniform(0.0, 0.5, size=n)
    par = smooth(random_simplex(rng, v, t, 5.0, size=n))
    ev = smooth(random_simplex(rng, v, t, 5.0, size=n))
    w = eta[:, None, None]
    z = kl_columns((1 - w) * par + w * ev, par).sum(axis=-1)
    bound = t * eta**2 / (2 * (1 - eta))
    assert np.all(z <= bound + 1e-9)


def test_collapse_can_fail_for_sharp_distributions():
    # the bound needs chi2(evidence || parametric) of order 1 per position
    par = col(0.99, 0.01)
    ev = col(0.01, 0.99)
    z = kl_divergence(mix(MixtureSpec(0.3, par, ev)), par).total
    assert z > collapse_bound(0.3, 1)


def test_from_probs_validation():
    with pytest.raises(DomainError):
        TokenDistribution.from_probs(np.array([[0.5], [0.3]]))
    with pytest.raises(DomainError):
        TokenDistribution.from_probs(np.array([[1.2], [-0.2]]))
    with pytest.raises(DimensionError):
        TokenDistribution.from_probs(np.array([0.5, 0.5]))
    with pytest.raises(DimensionError):
        TokenDistribution(np.ones((1, 3)))


def test_immutable():
    d = TokenDistribution.uniform(3, 2)
    with pytest.raises(ValueError):
        d.probs[0, 0] = 1.0


def test_record_round_trip():
    rng = np.random.default_rng(8)
    d = TokenDistribution.from_probs(random_simplex(rng, 9, 4))
    assert TokenDistribution.from_record(d.to_record()) == d
    back = TokenDistribution.from_record(d.to_record(logprob=True))
    assert np.allclose(back.probs, d.probs, rtol=1e-12, atol=0)


def test_gamma_capped_by_floor():
    d = kl_divergence(col(1.0, 0.0), col(0.0, 1.0))
    assert np.isfinite(d.total)
    assert d.total <= LOG_RATIO_CAP + 1e-9


# ---- properties ----------------------------------------------------------

dims = st.tuples(st.integers(2, 12), st.integers(1, 6))


def tensors(seed, v, t, conc):
    rng = np.random.default_rng(seed)
    return random_simplex(rng, v, t, conc)


@settings(max_examples=200, deadline=None)
@given(dims, st.integers(0, 2**32 - 1), st.floats(0.05, 10.0))
def test_prop_valid_after_smoothing(vt, seed, conc):
    raw = tensors(seed, *vt, conc)
    d = TokenDistribution.from_probs(raw)
    assert np.all(np.abs(d.probs.sum(axis=0) - 1.0) <= 1e-9)
    assert d.probs.min() >= EPS_FLOOR * (1 - 1e-9)
    assert np.abs(d.probs - raw).sum(axis=0).max() <= 2 * vt[0] * EPS_FLOOR + 1e-15


@settings(max_examples=200, deadline=None)
@given(dims, st.integers(0, 2**32 - 1), st.floats(0.05, 10.0))
def test_prop_kl_nonnegative_and_sums(vt, seed, conc):
    rng = np.random.default_rng(seed)
    p = TokenDistribution.from_probs(random_simplex(rng, *vt, conc))
    q = TokenDistribution.from_probs(random_simplex(rng, *vt, conc))
    s = kl_divergence(p, q)
    assert s.total >= -1e-9
    assert abs(s.total - sum(s.per_position)) <= 1e-9
    assert len(s.per_position) == vt[1]


@settings(max_examples=200, deadline=None)
@given(dims, st.integers(0, 2**32 - 1), st.sampled_from(["equal", "tiny", "distinct"]))
def test_prop_identity_of_indiscernibles(vt, seed, kind):
    rng = np.random.default_rng(seed)
    p = TokenDistribution.from_probs(random_simplex(rng, *vt, 1.0))
    if kind == "equal":
        q = TokenDistribution(p.probs.copy())
    elif kind == "tiny":
        q = TokenDistribution.from_probs(p.probs + rng.uniform(0, 1e-9, size=vt) * p.probs)
    else:
        q = TokenDistribution.from_probs(random_simplex(rng, *vt, 1.0))
    l1 = np.abs(p.probs - q.probs).sum(axis=0).max()
    z = kl_divergence(p, q).total
    if l1 <= 1e-8:
        assert z <= 1e-12
    else:
        assert z > 0.0


@settings(max_examples=200, deadline=None)
@given(dims, st.integers(0, 2**32 - 1), st.floats(0.0, 0.5))
def test_prop_collapse_below_curvature_bound(vt, seed, eta):
    """Always-valid form: KL <= chi2 * (eta + (1-eta) ln(1-eta))."""
    rng = np.random.default_rng(seed)
    par = TokenDistribution.from_probs(random_simplex(rng, *vt, 1.0))
    ev = TokenDistribution.from_probs(random_simplex(rng, *vt, 1.0))
    z = kl_divergence(mix(MixtureSpec(eta, par, ev)), par).total
    chi2 = chi_square_divergence(ev, par)
    curv = eta + (1 - eta) * math.log1p(-eta) if eta < 1 else 1.0
    assert z <= chi2 * curv * (1 + 1e-9) + 1e-12
