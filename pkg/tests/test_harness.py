import csv
import math

import pytest

from hbyield.config import ConfigError, ProcessConfig
from hbyield.harness import (CASE_COLUMNS, HarnessError, LutCache, agreement_tolerance,
                             binomial_stderr, draw_validation_sets, independent_draws,
                             layout_for, load_manifest, pick, run_case_study, run_model,
                             run_simulation, run_validation)
from hbyield.layout import DieSpec, build_layout
from hbyield.report import YieldReport

FAST = ["model.resolution_w2w_um=2000", "model.resolution_d2w_um=1000", "model.n_theta=4",
        "model.n_lengths=16"]


@pytest.fixture
def fast():
    return ProcessConfig.load(None, FAST)


def _rep(y, source="model", mode="w2w", **kw):
    return YieldReport(y, 1.0, 1.0, y, source, mode, **kw)


def test_model_report_is_product(fast):
    rep = run_model(fast, cache=LutCache())
    assert rep.y_total == pytest.approx(rep.y_ovl * rep.y_cr * rep.y_df, abs=1e-15)
    assert rep.source == "model" and rep.extra["lut"]
    back = YieldReport.from_json(rep.to_json())
    assert back == rep


def test_model_rejects_wrong_die(fast):
    lay = build_layout("full", DieSpec(width_mm=5.0, height_mm=5.0), (1000.0, 1000.0))
    with pytest.raises(HarnessError):
        run_model(fast, layout=lay)
    with pytest.raises(ConfigError):
        run_model(fast, mode="c2w")


def test_cache_hit_is_identical(fast):
    cache = LutCache()
    a = run_model(fast, cache=cache)
    b = run_model(fast, cache=cache)
    assert cache.builds == 1
    assert (a.y_ovl, a.y_cr, a.y_df, a.y_total) == (b.y_ovl, b.y_cr, b.y_df, b.y_total)


def test_cache_reused_across_process_sweep(fast):
    # density scales the count only; the table does not depend on it
    cache = LutCache()
    ys = [run_model(fast.with_overrides(process__defect_density_per_cm2=d, sigma1_nm=s),
                    cache=cache).y_df for d, s in ((0.05, 10), (0.1, 20), (0.2, 30))]
    assert cache.builds == 1
    assert ys[0] > ys[1] > ys[2]


def test_fingerprint_tracks_resolution_and_grid(fast):
    lay = layout_for(fast)
    fp = LutCache.key(fast, lay, "w2w")[0]
    other = fast.with_overrides(model__n_theta=8)
    assert LutCache.key(other, layout_for(other), "w2w")[0] != fp
    finer = fast.with_overrides(model__resolution_w2w_um=1000.0)
    assert LutCache.key(finer, layout_for(finer), "w2w")[0] != fp
    assert LutCache.key(fast, lay, "d2w")[0] != fp


def test_disk_cache_round_trip_and_corruption(tmp_path, fast):
    first = LutCache(tmp_path)
    a = run_model(fast, cache=first)
    files = list(tmp_path.glob("lut_*.csv"))
    assert len(files) == 1
    second = LutCache(tmp_path)
    b = run_model(fast, cache=second)
    assert second.builds == 0 and a.y_df == b.y_df
    files[0].write_text("garbage\n")
    third = LutCache(tmp_path)
    with pytest.warns(RuntimeWarning, match="rebuilding"):
        c = run_model(fast, cache=third)
    assert third.builds == 1 and c.y_df == a.y_df


def test_simulation_wrapper(fast):
    rep = run_simulation(fast.with_overrides(process__mode="d2w"), n_samples=300, seed=1)
    assert rep.source == "simulation" and rep.sample_counts["dies"] == 300


def test_validation_with_stubs():
    sets = [ProcessConfig(), ProcessConfig().with_overrides(process__mode="d2w")]
    res = run_validation(sets, model_fn=lambda c: _rep(0.9), sim_fn=lambda c: _rep(0.9, "simulation"))
    assert res.mse == {"ovl": 0.0, "cr": 0.0, "df": 0.0, "total": 0.0}
    res = run_validation(sets, model_fn=lambda c: _rep(0.9),
                         sim_fn=lambda c: _rep(0.8, "simulation"))
    assert res.mse["ovl"] == pytest.approx(0.01)
    assert len(res.rows) == 8
    with pytest.raises(ValueError):
        run_validation(sets[:1])


def test_validation_csv_schema(tmp_path):
    sets = [ProcessConfig(), ProcessConfig()]
    res = run_validation(sets, model_fn=lambda c: _rep(0.9), sim_fn=lambda c: _rep(0.8, "simulation"))
    res.write_csv(tmp_path / "v.csv")
    rows = list(csv.reader(open(tmp_path / "v.csv")))
    assert rows[0] == ["set_id", "component", "y_model", "y_sim"]
    assert len(rows) == 9


def test_draw_validation_sets_in_ranges():
    man = load_manifest()
    sets = draw_validation_sets(20, seed=0, manifest=man)
    assert [c.mode for c in sets[:4]] == ["w2w", "d2w", "w2w", "d2w"]
    for cfg in sets:
        for name, spec in man["ranges"].items():
            lo, hi = spec.get("uniform") or spec.get("log_uniform")
            assert lo <= cfg[name] <= hi
        assert cfg["design.pitch_um"] in man["pitch_um"]["choice"]
    again = draw_validation_sets(20, seed=0, manifest=man)
    assert sets == again
    assert draw_validation_sets(3, seed=1, manifest=man) != sets[:3]


def test_manifest_needs_known_distribution():
    with pytest.raises(ConfigError):
        draw_validation_sets(1, manifest={"ranges": {"process.sigma1_nm": {"normal": [1, 2]}}})


def test_tolerance_helpers():
    assert binomial_stderr(1.0, 10) > 0
    assert binomial_stderr(0.5, 10_000) == pytest.approx(0.005, rel=1e-3)
    sim = YieldReport(1.0, 0.99, 0.9, 0.89, "simulation", "w2w",
                      sample_counts={"dies": 6480, "wafers": 10, "batches": 10},
                      stderr={"ovl": 0.0, "cr": 0.001, "df": 0.004, "total": 0.004})
    assert independent_draws(sim, "ovl") == 10 and independent_draws(sim, "df") == 6480
    # all ten wafers passed: the binomial bound keeps the band open
    assert agreement_tolerance(sim, "ovl") == pytest.approx(3 * binomial_stderr(1.0, 10))
    assert agreement_tolerance(sim, "cr") == 0.02


CASE_ARGS = {
    "defect_density": dict(densities=(0.1,), areas=(25,)),
    "pitch": dict(pitches=(0.5,), areas=(25,)),
    "chiplet_size": dict(areas=(25,)),
    "pad_layouts": {},
    "redundancy_spacing": dict(densities=(0.1,), seeds=(0,)),
}


@pytest.mark.parametrize("name", sorted(CASE_ARGS))
def test_case_study_csv_schema(tmp_path, fast, name):
    out = tmp_path / f"case_{name}.csv"
    rows = run_case_study(name, fast, out, **CASE_ARGS[name])
    with open(out) as fh:
        reader = csv.DictReader(fh)
        assert reader.fieldnames == CASE_COLUMNS
        body = list(reader)
    assert len(body) == len(rows) > 0
    for r in body:
        assert 0.0 <= float(r["value"]) <= 1.0 + 1e-12 or r["component"] == "df_sim_stderr"
        assert r["mode"] in ("w2w", "d2w")


def test_case_study_rows_consistent(fast):
    rows = run_case_study("chiplet_size", fast, areas=(25,))
    tot = pick(rows, mode="d2w", component="total")[0]
    assert pick(rows, mode="d2w", component="sys")[0] == pytest.approx(tot ** (1000 / 25))
    with pytest.raises(ValueError):
        run_case_study("weather", fast)


def test_case_study_reproducible(tmp_path, fast):
    a = run_case_study("redundancy_spacing", fast, tmp_path / "a.csv", densities=(0.1,),
                       seeds=(0,))
    b = run_case_study("redundancy_spacing", fast, tmp_path / "b.csv", densities=(0.1,),
                       seeds=(0,))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a == b


def test_infeasible_redundancy_reports_block(fast):
    from hbyield.layout import LayoutError

    with pytest.raises(LayoutError):
        run_case_study("redundancy_spacing", fast.with_overrides(die_width_mm=0.4,
                                                                 die_height_mm=0.4),
                       densities=(0.1,), seeds=(0,), block_um=200.0)


def test_model_components_bounded(fast):
    for mode in ("w2w", "d2w"):
        rep = run_model(fast.with_overrides(process__mode=mode), cache=LutCache())
        for v in (rep.y_ovl, rep.y_cr, rep.y_df):
            assert 0.0 <= v <= 1.0
        assert not math.isnan(rep.y_total)
