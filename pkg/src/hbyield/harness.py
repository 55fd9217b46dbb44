"""Model and simulation runners, table cache, validation and case studies."""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from hbyield.config import ConfigError, ProcessConfig
from hbyield.defect import (CriticalAreaLUT, _fingerprint, build_lut_d2w, build_lut_w2w,
                            default_tail_lmax_um, load_lut_csv, main_void_radius_for_tail,
                            save_lut_csv, yield_df_d2w, yield_df_w2w)
from hbyield.layout import (DieSpec, PadBlockGrid, build_layout, build_random_redundant_layout,
                            generate_wafer_map)
from hbyield.overlay import yield_ovl_d2w, yield_ovl_w2w
from hbyield.recess import yield_recess
from hbyield.report import YieldReport
from hbyield.simulator import CHANNELS, SimConfig, simulate

CASE_STUDIES = ("defect_density", "pitch", "chiplet_size", "pad_layouts", "redundancy_spacing")
SYSTEM_AREA_MM2 = 1000.0
CASE_COLUMNS = ["case", "config_id", "mode", "layout", "pitch_um", "die_area_mm2",
                "defect_density_per_cm2", "scheme", "spacing_um", "seed", "component", "value"]


class HarnessError(ValueError):
    """Mismatched inputs (for example a layout that does not fit the die)."""


# --- layouts -------------------------------------------------------------

def layout_for(cfg: ProcessConfig, mode: str | None = None) -> PadBlockGrid:
    """Canonical layout named in the config at the mode's resolution."""
    d = cfg.values["design"]
    res = cfg.resolution_um(mode)
    return build_layout(d["layout"], cfg.die(), (res, res),
                        (d["critical_fraction"], d["redundant_fraction"], d["dummy_fraction"]),
                        seed=d["layout_seed"])


def _check_layout(cfg: ProcessConfig, layout: PadBlockGrid) -> None:
    die = cfg.die()
    if not (math.isclose(layout.die_width_mm, die.width_mm) and
            math.isclose(layout.die_height_mm, die.height_mm)):
        raise HarnessError(f"layout is {layout.die_width_mm}x{layout.die_height_mm} mm but the "
                           f"die is {die.width_mm}x{die.height_mm} mm")


# --- table cache ---------------------------------------------------------

class LutCache:
    """Critical-area tables keyed by layout, resolution and grid settings.

    Tables live in memory and, when ``directory`` is set, as CSV files named
    by their fingerprint. A file that fails to load is rebuilt with a warning.
    """

    def __init__(self, directory=None, backend=None):
        self.directory = Path(directory) if directory is not None else None
        self.backend = backend
        self._mem: dict[str, CriticalAreaLUT] = {}
        self.builds = 0
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(cfg: ProcessConfig, layout: PadBlockGrid, mode: str) -> tuple[str, dict]:
        """Fingerprint and build arguments for a table."""
        m = cfg.values["model"]
        res = (layout.gx_um, layout.gy_um)
        p = cfg.defect()
        if mode == "w2w":
            l_max = default_tail_lmax_um(cfg.values["design"]["wafer_radius_mm"] * 1e3, p,
                                         m["tail_lmax_factor"])
            args = {"l_max_um": l_max, "n_theta": m["n_theta"], "n_lengths": m["n_lengths"]}
            fp = _fingerprint("w2w", layout.fingerprint(), res, m["n_theta"], m["n_lengths"],
                              round(l_max, 6))
        else:
            r_max = main_void_radius_for_tail(m["disk_tail_fraction"],
                                              cfg.die().effective_radius_um, p)
            args = {"r_max_um": r_max}
            fp = _fingerprint("d2w", layout.fingerprint(), res, round(r_max, 6))
        return fp, args

    def _path(self, fp: str):
        return None if self.directory is None else self.directory / f"lut_{fp}.csv"

    def get(self, cfg: ProcessConfig, layout: PadBlockGrid, mode: str) -> CriticalAreaLUT:
        fp, args = self.key(cfg, layout, mode)
        if fp in self._mem:
            return self._mem[fp]
        path = self._path(fp)
        lut = None
        if path is not None and path.exists():
            try:
                lut = load_lut_csv(path)
                if lut.fingerprint != fp:
                    raise ValueError("fingerprint mismatch")
            except Exception as exc:  # any unreadable file is rebuilt
                warnings.warn(f"rebuilding corrupted table {path.name}: {exc}", RuntimeWarning,
                              stacklevel=2)
                lut = None
        if lut is None:
            if mode == "w2w":
                lut = build_lut_w2w(layout, args["l_max_um"], args["n_theta"], args["n_lengths"],
                                    backend=self.backend)
            else:
                lut = build_lut_d2w(layout, args["r_max_um"], backend=self.backend)
            self.builds += 1
            if path is not None:
                save_lut_csv(lut, path)
        self._mem[fp] = lut
        return lut


_DEFAULT_CACHE = LutCache()


# --- model and simulation ------------------------------------------------

@lru_cache(maxsize=32)
def _sites(wafer) -> np.ndarray:
    sites = generate_wafer_map(wafer)
    sites.flags.writeable = False
    return sites


def run_model(cfg: ProcessConfig, layout: PadBlockGrid | None = None,
              cache: LutCache | None = None, mode: str | None = None) -> YieldReport:
    """Analytical yield: product of overlay, recess and defect components."""
    mode = mode or cfg.mode
    if mode not in ("w2w", "d2w"):
        raise ConfigError(f"unknown mode {mode!r}")
    t0 = time.perf_counter()
    layout = layout_for(cfg, mode) if layout is None else layout
    _check_layout(cfg, layout)
    cache = _DEFAULT_CACHE if cache is None else cache
    die = cfg.die()
    m = cfg.values["model"]
    orders = (m["quad_translation"], m["quad_rotation"])
    lut = cache.get(cfg, layout, mode)
    if mode == "w2w":
        sites = _sites(cfg.wafer())
        y_ovl = yield_ovl_w2w(sites, layout, die, cfg.overlay(), orders)
        y_df = yield_df_w2w(lut, cfg.values["design"]["wafer_radius_mm"] * 1e3, cfg.defect())
    else:
        y_ovl = yield_ovl_d2w(layout, die, cfg.overlay(), orders)
        y_df = yield_df_d2w(lut, die.effective_radius_um, cfg.defect())
    y_cr = yield_recess(layout, cfg.recess(), die)
    return YieldReport(y_ovl, y_cr, y_df, y_ovl * y_cr * y_df, "model", mode,
                       runtime_s=time.perf_counter() - t0,
                       extra={"lut": lut.fingerprint, "layout": layout.fingerprint()})


def sim_config(cfg: ProcessConfig, mode: str | None = None, n_samples: int | None = None,
               seed: int | None = None, channels=CHANNELS) -> SimConfig:
    mode = mode or cfg.mode
    s = cfg.values["sim"]
    if n_samples is None:
        n_samples = s["n_wafers"] if mode == "w2w" else s["n_dies"]
    d = cfg.values["design"]
    return SimConfig(mode=mode, n_samples=int(n_samples),
                     seed=s["seed"] if seed is None else int(seed), die=cfg.die(),
                     overlay=cfg.overlay(), recess=cfg.recess(), defect=cfg.defect(),
                     wafer_radius_mm=d["wafer_radius_mm"],
                     edge_exclusion_mm=d["edge_exclusion_mm"], channels=tuple(channels),
                     chunk_dies=s["chunk_dies"], tail_end_ratio=s["tail_end_ratio"],
                     workers=s["workers"])


def run_simulation(cfg: ProcessConfig, layout: PadBlockGrid | None = None,
                   mode: str | None = None, n_samples: int | None = None,
                   seed: int | None = None, channels=CHANNELS) -> YieldReport:
    """Monte Carlo yield for the config (wafers or dies from the sim section)."""
    mode = mode or cfg.mode
    layout = layout_for(cfg, mode) if layout is None else layout
    _check_layout(cfg, layout)
    return simulate(sim_config(cfg, mode, n_samples, seed, channels), layout)


# --- validation ----------------------------------------------------------

def load_manifest(path=None) -> dict:
    if path is None:
        text = resources.files("hbyield").joinpath("data/validation_manifest.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def draw_validation_sets(n: int, seed: int = 0, manifest: dict | None = None,
                         base: ProcessConfig | None = None) -> list[ProcessConfig]:
    """Parameter sets drawn from the manifest ranges; modes alternate."""
    manifest = load_manifest() if manifest is None else manifest
    base = ProcessConfig() if base is None else base
    rng = np.random.default_rng([seed, 7])
    modes = manifest.get("modes", ["w2w", "d2w"])
    ratio = manifest.get("pad_ratio", {"top": 0.3, "bottom": 0.5})
    out = []
    for i in range(n):
        kw = {"process__mode": modes[i % len(modes)]}
        for name, spec in manifest["ranges"].items():
            section, key = name.split(".", 1)
            if "uniform" in spec:
                lo, hi = spec["uniform"]
                v = float(rng.uniform(lo, hi))
            elif "log_uniform" in spec:
                lo, hi = spec["log_uniform"]
                v = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
            else:
                raise ConfigError(f"manifest entry {name} needs uniform or log_uniform")
            kw[f"{section}__{key}"] = v
        if "pitch_um" in manifest:
            p = float(rng.choice(manifest["pitch_um"]["choice"]))
            kw.update(design__pitch_um=p, design__top_pad_um=ratio["top"] * p,
                      design__bottom_pad_um=ratio["bottom"] * p)
        if "layout" in manifest:
            kw["design__layout"] = str(rng.choice(manifest["layout"]["choice"]))
        kw["sim__seed"] = int(rng.integers(2**31))
        out.append(base.with_overrides(**kw))
    return out


@dataclass
class ValidationResult:
    rows: list = field(default_factory=list)
    mse: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["set_id", "component", "y_model", "y_sim"])
            w.writerows(self.rows)


def run_validation(config_sets, sim_budget: int | None = None, model_fn=None, sim_fn=None,
                   components=("ovl", "cr", "df", "total")) -> ValidationResult:
    """Model against simulation for each set; scatter rows and per-component MSE.

    Args:
        config_sets: At least two configs.
        sim_budget: Samples per simulation (wafers or dies); config value if None.
        model_fn, sim_fn: Callables ``f(cfg) -> YieldReport``; the real model
            and simulator by default (stubs make the aggregation testable).
    """
    if len(config_sets) < 2:
        raise ValueError("validation needs at least two parameter sets")
    model_fn = model_fn or run_model
    sim_fn = sim_fn or (lambda c: run_simulation(c, n_samples=sim_budget))
    res = ValidationResult()
    err = {c: [] for c in components}
    for i, cfg in enumerate(config_sets):
        ym, ys = model_fn(cfg), sim_fn(cfg)
        res.reports.append((ym, ys))
        for c in components:
            a, b = ym.component(c), ys.component(c)
            res.rows.append([i, c, a, b])
            err[c].append((a - b) ** 2)
    res.mse = {c: float(np.mean(v)) for c, v in err.items()}
    return res


# --- case studies --------------------------------------------------------

def _die_side_mm(area_mm2: float) -> float:
    return math.sqrt(area_mm2)


def _rows_for(case, cid, rep: YieldReport, info: dict, system: bool = False):
    rows = []
    comps = {"ovl": rep.y_ovl, "cr": rep.y_cr, "df": rep.y_df, "total": rep.y_total}
    if system:
        comps["sys"] = rep.y_total ** (SYSTEM_AREA_MM2 / info["die_area_mm2"])
    for comp, v in comps.items():
        row = {"case": case, "config_id": cid, "component": comp, "value": v}
        row.update(info)
        rows.append(row)
    return rows


def _grid_case(name, base, cache, densities, pitches, areas):
    rows, cid = [], 0
    for mode in ("w2w", "d2w"):
        for dt in densities:
            for pitch in pitches:
                for area in areas:
                    side = _die_side_mm(area)
                    cfg = base.with_overrides(
                        process__mode=mode, process__defect_density_per_cm2=dt,
                        design__pitch_um=pitch, design__top_pad_um=0.3 * pitch,
                        design__bottom_pad_um=0.5 * pitch, design__die_width_mm=side,
                        design__die_height_mm=side, design__layout="full")
                    rep = run_model(cfg, cache=cache)
                    info = {"mode": mode, "layout": "full", "pitch_um": pitch,
                            "die_area_mm2": area, "defect_density_per_cm2": dt,
                            "scheme": "", "spacing_um": "", "seed": ""}
                    rows += _rows_for(name, cid, rep, info, system=(mode == "d2w"))
                    cid += 1
    return rows


def _pad_layouts(base, cache, pitch=0.3):
    rows, cid = [], 0
    for mode in ("w2w", "d2w"):
        for layout in ("full", "sparse", "peripheral", "centralized"):
            cfg = base.with_overrides(process__mode=mode, design__layout=layout,
                                      design__pitch_um=pitch, design__top_pad_um=0.3 * pitch,
                                      design__bottom_pad_um=0.5 * pitch)
            rep = run_model(cfg, cache=cache)
            info = {"mode": mode, "layout": layout, "pitch_um": pitch,
                    "die_area_mm2": cfg.die().area_mm2,
                    "defect_density_per_cm2": cfg["process.defect_density_per_cm2"],
                    "scheme": "", "spacing_um": "", "seed": ""}
            rows += _rows_for("pad_layouts", cid, rep, info)
            cid += 1
    return rows


REDUNDANCY_CONFIGS = (("none", 0.0), ("dedicated", 200.0), ("dedicated", 400.0),
                      ("dedicated", 600.0), ("dedicated", 800.0), ("shared", 0.0))


def _redundancy(base, cache, densities=(0.1, 0.5), seeds=(0, 1, 2), block_um=200.0,
                simulate_shared=False):
    rows, cid = [], 0
    die = base.die()
    for mode in ("w2w", "d2w"):
        for dt in densities:
            cfg = base.with_overrides(process__mode=mode, process__defect_density_per_cm2=dt)
            for scheme, spacing in REDUNDANCY_CONFIGS:
                for seed in (seeds if scheme == "dedicated" else seeds[:1]):
                    layout, _ = build_random_redundant_layout(die, block_um, spacing, seed=seed,
                                                              scheme=scheme)
                    rep = run_model(cfg, layout=layout, cache=cache)
                    info = {"mode": mode, "layout": "redundant", "pitch_um": die.pitch_um,
                            "die_area_mm2": die.area_mm2, "defect_density_per_cm2": dt,
                            "scheme": scheme, "spacing_um": spacing, "seed": seed}
                    rows += _rows_for("redundancy_spacing", cid, rep, info)
                    if simulate_shared and scheme in ("none", "shared"):
                        sim = run_simulation(cfg, layout=layout, seed=seed, channels=("defect",))
                        for comp, v in (("df_sim", sim.y_df), ("df_sim_stderr", sim.stderr["df"])):
                            row = {"case": "redundancy_spacing", "config_id": cid,
                                   "component": comp, "value": v}
                            row.update(info)
                            rows.append(row)
                    cid += 1
    return rows


def run_case_study(name: str, base: ProcessConfig | None = None, out=None,
                   cache: LutCache | None = None, **options) -> list[dict]:
    """Sweep one case study and return long-format rows (written as CSV to ``out``).

    Args:
        name: One of :data:`CASE_STUDIES`.
        base: Baseline config; the study overrides its swept keys.
        out: Optional CSV path.
        cache: Table cache shared across the sweep.
        **options: Grid overrides, e.g. ``densities``, ``pitches``, ``areas``,
            ``seeds``, ``simulate_shared``.
    """
    base = ProcessConfig() if base is None else base
    cache = LutCache() if cache is None else cache
    if name == "defect_density":
        rows = _grid_case(name, base, cache, options.get("densities", (0.01, 0.1)),
                          options.get("pitches", (1.0,)), options.get("areas", (10, 50, 100)))
    elif name == "pitch":
        rows = _grid_case(name, base, cache, options.get("densities", (0.1,)),
                          options.get("pitches", (0.3, 1.0)), options.get("areas", (10, 50, 100)))
    elif name == "chiplet_size":
        rows = _grid_case(name, base, cache, options.get("densities", (0.1,)),
                          options.get("pitches", (1.0,)),
                          options.get("areas", (10, 25, 50, 100)))
    elif name == "pad_layouts":
        rows = _pad_layouts(base, cache, options.get("pitch", 0.3))
    elif name == "redundancy_spacing":
        rows = _redundancy(base, cache, options.get("densities", (0.1, 0.5)),
                           options.get("seeds", (0, 1, 2)), options.get("block_um", 200.0),
                           options.get("simulate_shared", False))
    else:
        raise ValueError(f"unknown case study {name!r}; choose from {', '.join(CASE_STUDIES)}")
    if out is not None:
        write_rows(rows, out)
    return rows


def write_rows(rows, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CASE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def pick(rows, **match) -> list[float]:
    """Values of rows whose fields equal ``match``."""
    return [r["value"] for r in rows if all(r.get(k) == v for k, v in match.items())]


def independent_draws(report: YieldReport, component: str) -> int:
    """Independent trials behind a simulated component yield.

    W2W overlay draws its distortion once per wafer, so the wafers are the
    trials; other components vary die by die.
    """
    counts = report.sample_counts
    if report.mode == "w2w" and component in ("ovl", "total"):
        return int(counts.get("wafers", counts.get("batches", 1)))
    return int(counts.get("dies", 1))


def binomial_stderr(y: float, n: int) -> float:
    """Agresti-Coull standard error; stays positive when y is 0 or 1."""
    n_t = n + 4
    p = (y * n + 2) / n_t
    return math.sqrt(p * (1 - p) / n_t)


def agreement_tolerance(sim: YieldReport, component: str, floor: float = 0.02,
                        k: float = 3.0) -> float:
    """max(floor, k·stderr) with stderr the larger of batch and binomial estimates."""
    y = sim.component(component)
    se = max(sim.stderr.get(component, 0.0),
             binomial_stderr(y, independent_draws(sim, component)))
    return max(floor, k * se)
