import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hbyield.defect import DefectParams, main_void_cdf, tail_length_cdf
from hbyield.layout import DieSpec, build_layout, build_random_redundant_layout
from hbyield.overlay import OverlayParams
from hbyield.recess import RecessParams, yield_recess
from hbyield.simulator import (ConvergenceError, SimConfig, converge, make_void,
                               sample_die_voids, sample_wafer_voids, simulate)
from oracles import chi2_pvalue

FIELDS = ("y_ovl", "y_cr", "y_df", "y_total")


def _ys(rep):
    return tuple(getattr(rep, f) for f in FIELDS)


@pytest.fixture(scope="module")
def coarse():
    return build_layout("peripheral", DieSpec(), (1000.0, 1000.0))


def test_seeded_runs_repeat(coarse):
    cfg = SimConfig(n_samples=2, seed=11)
    a, b = simulate(cfg, coarse), simulate(cfg, coarse)
    assert _ys(a) == _ys(b) and a.stderr == b.stderr


def test_worker_count_does_not_change_results(coarse):
    cfg = SimConfig(mode="d2w", n_samples=3000, chunk_dies=500, seed=3)
    assert _ys(simulate(cfg, coarse)) == _ys(simulate(replace(cfg, workers=2), coarse))


def test_channels_draw_independently(coarse):
    cfg = SimConfig(n_samples=2, seed=5, defect=DefectParams(density_cm2=0.5))
    all_on = simulate(cfg, coarse)
    df_only = simulate(replace(cfg, channels=("defect",)), coarse)
    ovl_only = simulate(replace(cfg, channels=("overlay",)), coarse)
    assert df_only.y_df == all_on.y_df
    assert ovl_only.y_ovl == all_on.y_ovl
    assert df_only.y_ovl == 1.0 and ovl_only.y_df == 1.0


def test_total_not_above_components(coarse):
    rep = simulate(SimConfig(mode="d2w", n_samples=2000, seed=1,
                             defect=DefectParams(density_cm2=1.0)), coarse)
    assert rep.y_total <= min(rep.y_ovl, rep.y_cr, rep.y_df)


def test_zero_particles_is_defect_free(coarse):
    for mode, n in (("w2w", 1), ("d2w", 500)):
        rep = simulate(SimConfig(mode=mode, n_samples=n, defect=DefectParams(density_cm2=0.0),
                                 channels=("defect",)), coarse)
        assert rep.y_df == 1.0


def test_recess_matches_binomial(die):
    # recess draws are Bernoulli per die with the model's die POS
    grid, _ = build_random_redundant_layout(die, 1000.0, 0.0, scheme="none")
    rp = RecessParams(sigma_top_nm=1.1, sigma_bot_nm=1.1)
    want = yield_recess(grid, rp, die)
    n = 20_000
    rep = simulate(SimConfig(mode="d2w", n_samples=n, recess=rp, channels=("recess",)), grid)
    assert abs(rep.y_cr - want) <= 4 * math.sqrt(want * (1 - want) / n)


def test_d2w_defect_matches_poisson(die, full_d2w):
    # a fully critical die fails on any particle: Y = exp(-A·D_t)
    n = 20_000
    rep = simulate(SimConfig(mode="d2w", n_samples=n, channels=("defect",), seed=2), full_d2w)
    want = math.exp(-0.1)
    assert abs(rep.y_df - want) <= 4 * math.sqrt(want * (1 - want) / n)


def test_make_void_geometry():
    p = DefectParams()
    v = make_void(30.0, 40.0, 50.0, 0.16, p, with_tail=True)
    assert v.main_radius == pytest.approx((p.k_r * 5e4 + p.k_r0) * 0.4)
    l = p.k_l * 5e4 * 0.4
    (x, y), _ = v.tail[-1]
    assert math.hypot(x - 30.0, y - 40.0) * 1e3 == pytest.approx(l)
    # outward and along the radial direction
    assert math.atan2(y, x) == pytest.approx(math.atan2(40, 30))
    assert sum(math.pi * r * r for _, r in v.tail) == pytest.approx(p.k_s * 5e4 * 0.4)
    radii = [r for _, r in v.tail]
    assert radii[-1] == pytest.approx(0.25 * radii[0])
    assert make_void(30.0, 40.0, 50.0, 0.16, p, with_tail=False).tail == []


def test_tail_lengths_follow_density():
    cfg = SimConfig(defect=DefectParams(density_cm2=300.0))
    rng = np.random.default_rng(0)
    voids = sample_wafer_voids(rng, cfg)
    l = np.array([math.hypot(v.tail[-1][0][0] - v.origin[0], v.tail[-1][0][1] - v.origin[1])
                  for v in voids if v.tail]) * 1e3
    p = cfg.defect
    cdf = lambda x: tail_length_cdf(x, 150_000.0, p)
    assert chi2_pvalue(l, cdf, p.density_cm2, n_bins=40, hi=1e7) > 0.01


def test_main_void_radii_follow_density(die):
    p = DefectParams(density_cm2=50.0)
    counts, _, _, r = sample_die_voids(np.random.default_rng(1), p, 10.0, 10.0, 5000)
    die_r = die.effective_radius_um
    assert len(r) == counts.sum()
    cdf = lambda x: main_void_cdf(x, die_r, p)
    # square-die positions against the equal-area disk law
    assert chi2_pvalue(r, cdf, p.density_cm2, n_bins=40, lo=p.k_r0 * math.sqrt(p.t0_um),
                       hi=1e6) > 0.01


def test_converge_on_noiseless_config(coarse):
    cfg = SimConfig(channels=(), n_samples=1)
    n, rep = converge(cfg, coarse)
    assert n == 1 and rep.y_total == 1.0


def test_converge_is_deterministic(coarse):
    cfg = SimConfig(mode="d2w", seed=4, channels=("defect",))
    a = converge(cfg, coarse, cv_target=0.05, ladder=[100, 200, 500], reps=4)
    b = converge(cfg, coarse, cv_target=0.05, ladder=[100, 200, 500], reps=4)
    assert a[0] == b[0] and _ys(a[1]) == _ys(b[1])


def test_converge_reports_failure(coarse):
    cfg = SimConfig(mode="d2w", channels=("defect",), defect=DefectParams(density_cm2=2.0))
    with pytest.raises(ConvergenceError):
        converge(cfg, coarse, cv_target=1e-4, ladder=[100], reps=3)
    with pytest.raises(ValueError):
        converge(cfg, coarse, cv_target=0.0)


@pytest.mark.parametrize("kw", [dict(mode="x"), dict(n_samples=0), dict(tail_end_ratio=0.0),
                                dict(channels=("noise",))])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_yields_are_probabilities(seed):
    lay = build_layout("sparse", DieSpec(), (2000.0, 2000.0))
    rep = simulate(SimConfig(mode="d2w", n_samples=200, seed=seed,
                             overlay=OverlayParams(sigma1_nm=70.0)), lay)
    for f in FIELDS:
        assert 0.0 <= getattr(rep, f) <= 1.0
    assert rep.sample_counts["dies"] == 200
