import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kslog.params import (
    DomainError,
    EmptyIntervalError,
    IterationOverflowError,
    ModelParams,
    RawParams,
    RegionLabel,
    admissible_p_interval,
    bootstrap_sequence,
    classify_region,
    eq16_lhs,
    f_indicator,
    gradv_q_upper,
    in_iplus,
    scale_parameters,
    thresholds,
    unscale_parameters,
    verify_eq16_equivalence,
)

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


# -------------------------------------------------------------- scaling


def test_scale_identity():
    p, ts = scale_parameters(RawParams(1, 1, 0.5, 1, 1, 1))
    assert (p.chi, p.k, p.alpha, p.beta, p.c) == (0.5, 1, 1, 1, 1)
    assert ts == 1


def test_scale_ratios():
    p, ts = scale_parameters(RawParams(2, 4, 1, 2, 6, 0.5))
    assert (p.chi, p.k, p.alpha, p.beta, p.c) == (0.5, 2, 1, 3, 0.5)
    assert ts == 2


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_raw_params_rejects_nonpositive(bad):
    with pytest.raises(DomainError):
        RawParams(bad, 1, 1, 1, 1, 1)


@given(pos, pos, pos, pos, pos, pos)
def test_scale_roundtrip(d1, d2, chi0, c1, c2, c):
    raw = RawParams(d1, d2, chi0, c1, c2, c)
    back = unscale_parameters(*scale_parameters(raw))
    for name in ("d1", "d2", "chi0", "c1", "c2", "c"):
        a, b = getattr(raw, name), getattr(back, name)
        assert abs(a - b) <= 1e-14 * abs(a)


def test_model_params_validation():
    with pytest.raises(DomainError):
        ModelParams(chi=0.5, k=-1)
    with pytest.raises(DomainError):
        ModelParams(chi=0.5, dim=0)
    with pytest.raises(DomainError):
        ModelParams(chi=0.5, dim=3).require_simulable()
    with pytest.raises(DomainError):
        ModelParams(chi=-0.1).require_simulable()


# ------------------------------------------------------------ indicator


def test_indicator_vertex():
    assert f_indicator(2, 1.0, 3) == -1.5


def test_indicator_arithmetic():
    assert f_indicator(2, 0.5, 1) == pytest.approx(-0.25, abs=1e-15)


def test_indicator_rejects_bad_inputs():
    with pytest.raises(DomainError):
        f_indicator(0, 0.5, 1)
    with pytest.raises(DomainError):
        f_indicator(2, 0.5, 0)


@given(st.integers(1, 10), pos)
def test_threshold_roots(N, k):
    th = thresholds(N, k)
    assert abs(f_indicator(N / 2, th.chi1, k)) <= 1e-12 * max(1.0, k)
    assert abs(f_indicator(N / 2, th.chi2, k)) <= 1e-12 * max(1.0, k)


@given(st.floats(0.01, 50), st.floats(0.01, 50), st.floats(-5, 5), pos)
def test_indicator_monotone_in_p(p1, p2, chi, k):
    p1, p2 = min(p1, p2), max(p1, p2)
    lhs = f_indicator(p1, chi, k)
    rhs = f_indicator(p2, chi, k) + (k / p2 - k / p1)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)
    assert lhs <= f_indicator(p2, chi, k) + 1e-12


def test_iplus_nested_over_grid():
    for chi in np.linspace(0.01, 4, 60):
        for p in np.linspace(0.2, 8, 40):
            params = ModelParams(chi=float(chi), k=1.7)
            if in_iplus(float(p) * 1.5, params):
                assert in_iplus(float(p), params)


# ----------------------------------------------------------- thresholds


def test_thresholds_anchor():
    th = thresholds(2, 1.0)
    assert th.chi2 == 1.0
    assert th.chi1 == -1.0


@pytest.mark.parametrize("k", [0.3, 1.0, 4.0])
def test_thresholds_n2_k_bounds(k):
    th = thresholds(2, k)
    assert th.k1 == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-14)
    assert th.k2 == pytest.approx(3 + 2 * math.sqrt(2), abs=1e-14)


@pytest.mark.parametrize("N", range(1, 11))
def test_threshold_ordering(N):
    th = thresholds(N, 1.0)
    assert th.k1 < 1 < th.k2
    for k in np.linspace(th.k1, th.k2, 12)[1:-1]:
        t = thresholds(N, float(k))
        assert t.chi1 < 0 < t.chi2


def test_thresholds_validation():
    with pytest.raises(DomainError):
        thresholds(0, 1.0)
    with pytest.raises(DomainError):
        thresholds(2, 0.0)


# ---------------------------------------------------------- classifier


def test_classify_strong():
    v = classify_region(ModelParams(chi=0.5))
    assert v.in_iplus_n and v.in_iplus_half_n and v.theorem_applies
    assert v.label is RegionLabel.STRONG


def test_classify_border():
    v = classify_region(ModelParams(chi=0.8))
    assert v.in_iplus_half_n and not v.in_iplus_n
    assert v.label is RegionLabel.BORDER


def test_classify_outside():
    v = classify_region(ModelParams(chi=1.5))
    assert v.label is RegionLabel.OUTSIDE and not v.theorem_applies


def test_low_chi_large_k_is_outside():
    # 0 < chi <= chi1 for k >= k2 is reported as outside, without a blow-up claim
    k = 10.0
    th = thresholds(2, k)
    v = classify_region(ModelParams(chi=0.5 * th.chi1, k=k))
    assert not v.theorem_applies
    assert v.label is RegionLabel.OUTSIDE


@given(st.floats(0.01, 5), st.floats(0.05, 12), st.integers(1, 4))
def test_theorem_region_matches_iplus_half(chi, k, N):
    v = classify_region(ModelParams(chi=chi, k=k, dim=N))
    if abs(f_indicator(N / 2, chi, k)) > 1e-9:
        assert v.theorem_applies == v.in_iplus_half_n
    assert (not v.in_iplus_n) or v.in_iplus_half_n


# ------------------------------------------------------------ intervals


def test_p_interval_strong():
    assert admissible_p_interval(ModelParams(chi=0.5)) == (1.0, 4.0)


def test_p_interval_unbounded():
    lo, hi = admissible_p_interval(ModelParams(chi=1.0, k=3.0))
    assert lo == 1.0 and hi == math.inf


def test_p_interval_empty():
    with pytest.raises(EmptyIntervalError):
        admissible_p_interval(ModelParams(chi=1.5))


def test_gradv_q_border():
    assert gradv_q_upper(ModelParams(chi=0.8)) == pytest.approx(1 / 0.14, rel=1e-12)


def test_gradv_q_strong_is_infinite():
    assert gradv_q_upper(ModelParams(chi=0.5)) == math.inf


def test_gradv_q_outside_raises():
    with pytest.raises(DomainError):
        gradv_q_upper(ModelParams(chi=1.5))


# ------------------------------------------------------------ bootstrap


def test_bootstrap_example():
    seq = bootstrap_sequence(1.5, ModelParams(chi=0.8))
    assert len(seq) == 3
    assert seq[0] == 1.5
    assert seq[1] == pytest.approx(1 / (1 / 1.5 - 0.36), rel=1e-14)
    assert seq[1] == pytest.approx(3.2609, abs=1e-4)
    assert seq[2] == math.inf


def test_bootstrap_rejects_large_mu1():
    with pytest.raises(DomainError):
        bootstrap_sequence(1 / 0.36 + 1e-9, ModelParams(chi=0.8))


def test_bootstrap_rejects_non_border():
    with pytest.raises(DomainError):
        bootstrap_sequence(1.5, ModelParams(chi=0.5))


def test_bootstrap_small_mu1_increasing():
    seq = bootstrap_sequence(1.01, ModelParams(chi=0.8))
    assert seq[-1] == math.inf
    finite = seq[:-1]
    assert all(b > a for a, b in zip(finite, finite[1:]))


def test_bootstrap_iteration_cap():
    with pytest.raises(IterationOverflowError):
        bootstrap_sequence(1.01, ModelParams(chi=0.8), max_iters=1)


@given(st.floats(0.72, 0.99), st.floats(0.0, 1.0))
def test_bootstrap_monotone_property(chi, frac):
    params = ModelParams(chi=chi)
    upper = 1 / (1 - chi**2)
    mu1 = 1 + frac * (upper - 1)
    if not 1 < mu1 < upper:
        return
    seq = bootstrap_sequence(mu1, params)
    assert seq[-1] == math.inf
    assert all(b > a for a, b in zip(seq, seq[1:]))


# -------------------------------------------------- substitution check

SAMPLES = [0.0, 1.0, 10.0, 100.0]


def test_eq16_negative_inside():
    params = ModelParams(chi=0.5)
    assert verify_eq16_equivalence(2, params, SAMPLES)
    assert np.all(eq16_lhs(2, params, np.array(SAMPLES)) < 0)


def test_eq16_positive_outside():
    params = ModelParams(chi=1.5)
    assert verify_eq16_equivalence(2, params, SAMPLES)
    assert np.all(eq16_lhs(2, params, np.array(SAMPLES)) > 0)


def test_eq16_boundary():
    chi = math.sqrt(0.5)  # f(2) = chi^2 - 1/2 = 0 at k = 1
    params = ModelParams(chi=chi)
    assert verify_eq16_equivalence(2, params, SAMPLES)
    assert np.all(np.abs(eq16_lhs(2, params, np.array(SAMPLES))) < 1e-10)


def test_eq16_sign_mismatch_when_k_differs_from_one():
    # the substituted coefficient follows (chi + (k-1)/2)^2 - k/p, which agrees
    # with the indicator only at k = 1
    params = ModelParams(chi=1.0, k=3.0)
    assert f_indicator(2, 1.0, 3.0) < 0
    assert not verify_eq16_equivalence(2, params, SAMPLES)


def test_eq16_rejects_bad_inputs():
    with pytest.raises(DomainError):
        eq16_lhs(1.0, ModelParams(chi=0.5), np.array([1.0]))
    with pytest.raises(DomainError):
        eq16_lhs(2.0, ModelParams(chi=0.5), np.array([-1.0]))


@settings(max_examples=50)
@given(st.floats(1.1, 8), st.floats(0.01, 3), st.floats(0.2, 5), st.floats(0.05, 5))
def test_eq16_closed_form(p, chi, k, c):
    # coefficient = (p-1)/4 * (v+c)^{-(p+3)/2} * ((chi + (k-1)/2)^2 - k/p)
    params = ModelParams(chi=chi, k=k, c=c)
    v = np.array([0.0, 0.5, 3.0])
    expect = (p - 1) / 4 * (v + c) ** (-(p + 3) / 2) * ((chi + (k - 1) / 2) ** 2 - k / p)
    got = eq16_lhs(p, params, v)
    assert np.allclose(got, expect, rtol=1e-9, atol=1e-14)
