import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from hbyield.layout import DieSpec, build_layout, build_random_redundant_layout
from hbyield.recess import (RecessParams, adhesion_parameter, effective_contact_area,
                            height_bounds, log_group_pos, pad_fail_prob, recess_counts,
                            tolerable_peeling_stress, yield_from_counts, yield_recess)
from oracles import bonded_fraction_mp


def test_bonded_fraction_matches_high_precision():
    theta, ab = bonded_fraction_mp(1.0, 1.0, 73.0, 1.2, 0.17)
    assert adhesion_parameter(1.0, 1.0, 73.0, 1.2) == pytest.approx(theta, rel=1e-12)
    assert effective_contact_area(1.0) == pytest.approx(ab, rel=1e-12)
    assert ab == pytest.approx(0.7477277718660694, rel=1e-12)
    assert theta == pytest.approx(1.666, abs=1e-3)


@given(st.floats(0.1, 5), st.floats(0.2, 5), st.floats(10, 200), st.floats(0.2, 5))
def test_bonded_fraction_oracle_property(sz, r, e, w):
    _, ab = bonded_fraction_mp(sz, r, e, w, 0.17)
    assert effective_contact_area(sz, r, e, w) == pytest.approx(ab, rel=1e-9, abs=1e-14)


@given(st.floats(0.05, 5), st.floats(0.05, 5))
def test_bonded_fraction_decreases_with_roughness(a, b):
    lo, hi = sorted((a, b))
    assert effective_contact_area(lo) >= effective_contact_area(hi)
    assert effective_contact_area(0.0) == 1.0


def test_bonding_curve_override():
    curve = ((0.1, 1.0), (1.0, 0.9), (10.0, 0.2))
    theta = adhesion_parameter(1.0, 1.0, 73.0, 1.2)
    want = np.interp(math.log(theta), np.log([0.1, 1.0, 10.0]), [1.0, 0.9, 0.2])
    assert effective_contact_area(1.0, bonding_curve=curve) == pytest.approx(want)
    with pytest.raises(ValueError):
        effective_contact_area(1.0, bonding_curve=((0.1, 0.2), (1.0, 0.9)))


def test_tolerable_stress_baseline():
    _, ab = bonded_fraction_mp(1.0, 1.0, 73.0, 1.2, 0.17)
    want = ab * math.sqrt(2 * 73e9 * 1.2 / 1.5e-6) / 1e6
    assert tolerable_peeling_stress(RecessParams()) == pytest.approx(want, rel=1e-12)
    assert want == pytest.approx(255.54, abs=0.01)


def test_baseline_pad_failure_probability():
    p = RecessParams()
    d_cu = math.pi * 0.25**2
    lo, hi = height_bounds(p, d_cu)
    assert lo == -29.0 and hi == 0.0
    want = norm.cdf(lo, -20, math.sqrt(2)) + norm.sf(hi, -20, math.sqrt(2))
    assert pad_fail_prob(p, d_cu) == pytest.approx(want, rel=1e-9)
    assert want == pytest.approx(9.83e-11, rel=1e-3)


def test_peeling_bound_binds_at_high_density():
    p = RecessParams(h0_nm=-50.0)
    _, hi = height_bounds(p, 0.9)
    assert -29.0 < hi < 0.0
    assert height_bounds(p, 0.0) == (-29.0, 0.0)


@given(st.floats(0.5, 4), st.floats(0.5, 4))
def test_failure_grows_with_height_spread(a, b):
    lo, hi = sorted((a, b))
    d = math.pi * 0.25**2
    q_lo = pad_fail_prob(RecessParams(sigma_top_nm=lo, sigma_bot_nm=lo), d)
    q_hi = pad_fail_prob(RecessParams(sigma_top_nm=hi, sigma_bot_nm=hi), d)
    assert q_lo <= q_hi


@given(st.floats(1e-6, 0.05), st.integers(0, 400),
       st.lists(st.tuples(st.integers(2, 3), st.integers(1, 50)), max_size=6))
def test_log_space_matches_direct_product(q, n_cr, groups):
    direct = (1 - q) ** n_cr
    for m, pads in groups:
        direct *= (1 - q**m) ** pads
    assert yield_from_counts(q, n_cr, groups) == pytest.approx(direct, rel=1e-10)


@given(st.floats(1e-6, 0.2), st.integers(1, 30), st.integers(0, 200))
def test_shared_matches_binomial(q, n, pads):
    k = n + 1
    sets, rest = divmod(pads, k)
    per_set = (1 - q) ** k + k * q * (1 - q) ** (k - 1)
    direct = per_set**sets * (1 - q) ** rest
    assert math.exp(log_group_pos(q, 1, pads, shared_n=n)) == pytest.approx(direct, rel=1e-10)


@given(st.floats(1e-8, 0.3), st.integers(1, 1000))
def test_redundancy_never_hurts(q, pads):
    bare = yield_from_counts(q, 2 * pads)
    assert yield_from_counts(q, 0, [(2, pads)]) >= bare
    assert math.exp(log_group_pos(q, 1, pads, shared_n=20)) >= (1 - q) ** pads * (1 - 1e-12)


def test_extreme_probabilities():
    assert yield_from_counts(0.0, 1e9) == 1.0
    assert yield_from_counts(1.0, 1.0) == 0.0
    assert yield_from_counts(1.0, 0.0) == 1.0
    # tiny q over 1e8 pads stays accurate in log space
    q = 1e-12
    assert yield_from_counts(q, 1e8) == pytest.approx(math.exp(-1e-4), rel=1e-9)


def test_recess_counts_full(die, full_w2w):
    n_cr, groups = recess_counts(full_w2w, die.pitch_um)
    assert n_cr == 1e8 and groups == []


def test_baseline_recess_yield(die, full_w2w):
    q = pad_fail_prob(RecessParams(), math.pi * 0.25**2)
    assert yield_recess(full_w2w, RecessParams(), die) == pytest.approx(math.exp(1e8 * math.log1p(-q)))


def test_dedicated_pairs_beat_shared(die):
    p = RecessParams(sigma_top_nm=1.2, sigma_bot_nm=1.2)
    ded, _ = build_random_redundant_layout(die, 1000.0, 1000.0)
    shared, _ = build_random_redundant_layout(die, 1000.0, 0.0, scheme="shared")
    none, _ = build_random_redundant_layout(die, 1000.0, 0.0, scheme="none")
    y_none = yield_recess(none, p, die)
    assert y_none < yield_recess(shared, p, die) <= yield_recess(ded, p, die)


def test_params_validation():
    with pytest.raises(ValueError):
        RecessParams(sigma_top_nm=-1)
    with pytest.raises(ValueError):
        RecessParams(youngs_gpa=0)
    with pytest.raises(ValueError):
        RecessParams(cu_expansion_nm=-1)


def test_pattern_recess_uses_layout_density(die):
    lay = build_layout("peripheral", die, (400.0, 400.0))
    n_cr, groups = recess_counts(lay, die.pitch_um)
    assert n_cr == 160000 * int((lay.kinds == 3).sum())
    assert all(m == 2 for m, _ in groups)
