"""Monte Carlo reference simulator for bonding yield.

Each independent entity (a wafer in W2W, a chunk of dies in D2W) draws from
its own random streams keyed by (seed, entity, channel), so results do not
depend on worker count and switching a channel off leaves the draws of the
others untouched.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from hbyield.defect import DefectParams, sample_thickness, void_geometry
from hbyield.layout import (CellKind, DieSpec, PadBlockGrid, WaferSpec, cu_pattern_density,
                            generate_wafer_map)
from hbyield.overlay import OverlayParams, max_allowed_misalignment, systematic_shift
from hbyield.recess import RecessParams, height_bounds
from hbyield.report import YieldReport

CHANNELS = ("overlay", "defect", "recess")
_CH_ID = {"overlay": 1, "defect": 2, "recess": 3}


class ConvergenceError(RuntimeError):
    """Raised when the CV target is not met within the sample cap."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Attributes:
        mode: ``w2w`` or ``d2w``.
        n_samples: Wafers (W2W) or dies (D2W).
        seed: Root seed.
        channels: Failure channels to simulate.
        chunk_dies: Dies per independent D2W batch.
        tail_end_ratio: Radius of the last tail void relative to the first.
        workers: Process count; results do not depend on it.
    """

    mode: str = "w2w"
    n_samples: int = 10
    seed: int = 0
    die: DieSpec = field(default_factory=DieSpec)
    overlay: OverlayParams = field(default_factory=OverlayParams)
    recess: RecessParams = field(default_factory=RecessParams)
    defect: DefectParams = field(default_factory=DefectParams)
    wafer_radius_mm: float = 150.0
    edge_exclusion_mm: float = 0.0
    channels: tuple = CHANNELS
    chunk_dies: int = 1000
    tail_end_ratio: float = 0.25
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("w2w", "d2w"):
            raise ValueError("mode must be w2w or d2w")
        if self.n_samples < 1 or self.chunk_dies < 1:
            raise ValueError("sample counts must be positive")
        if not 0 < self.tail_end_ratio <= 1:
            raise ValueError("tail_end_ratio must lie in (0, 1]")
        bad = set(self.channels) - set(CHANNELS)
        if bad:
            raise ValueError(f"unknown channels {sorted(bad)}")


@dataclass
class VoidInstance:
    """One particle's voids: main disk plus tail disks (positions in mm, radii in µm)."""

    origin: tuple
    main_radius: float
    tail: list
    orientation: float

    def disks(self):
        yield (self.origin[0], self.origin[1], self.main_radius)
        for (x, y), r in self.tail:
            yield (x, y, r)


def make_void(x_mm, y_mm, L_mm, t_um, p: DefectParams, with_tail: bool,
              end_ratio: float = 0.25) -> VoidInstance:
    """Build the voids of one particle.

    Tail disks sit at l·i/n (i = 1..n) along the outward radial direction;
    radii fall linearly from the first to the last disk by ``end_ratio`` and
    are scaled so the disk areas sum to S.
    """
    r_mv, l, n, s = void_geometry(L_mm, t_um, p)
    theta = math.atan2(y_mm, x_mm) if L_mm > 0 else 0.0
    tail = []
    if with_tail and l > 0 and s > 0:
        k = max(1, int(round(float(n))))
        shape = np.linspace(1.0, end_ratio, k) if k > 1 else np.ones(1)
        rho_max = math.sqrt(float(s) / (math.pi * float((shape**2).sum())))
        ux, uy = math.cos(theta), math.sin(theta)
        for i in range(1, k + 1):
            d_mm = float(l) * i / k / 1e3
            tail.append(((x_mm + ux * d_mm, y_mm + uy * d_mm), rho_max * float(shape[i - 1])))
    return VoidInstance((float(x_mm), float(y_mm)), float(r_mv), tail, theta)


class _Context:
    """Layout-derived arrays reused for every die."""

    def __init__(self, cfg: SimConfig, layout: PadBlockGrid):
        self.cfg = cfg
        self.layout = layout
        die = cfg.die
        self.a, self.b = layout.die_width_mm, layout.die_height_mm
        self.xe, self.ye = layout.cell_bounds_mm()
        kinds = layout.kinds
        self.kinds = kinds
        self.cols = layout.cols
        crit = np.flatnonzero(kinds.ravel() == CellKind.CRITICAL)
        self.crit_rects = self._rects(crit)
        self.has_crit = crit.size > 0
        members = layout.group_members()
        self.shared_n = layout.shared_n
        gids = sorted(members)
        self.group_index = {g: i for i, g in enumerate(gids)}
        self.n_groups = len(gids)
        cells, owner = [], []
        for i, g in enumerate(gids):
            for (r, c) in members[g]:
                cells.append(r * self.cols + c)
                owner.append(i)
        self.member_cells = np.array(cells, dtype=np.int64)
        self.member_owner = np.array(owner, dtype=np.int64)
        self.group_size = np.bincount(self.member_owner, minlength=self.n_groups)
        self.member_of_cell = np.full(kinds.size, -1, np.int64)
        self.member_of_cell[self.member_cells] = np.arange(len(cells))
        self.member_rects = self._rects(self.member_cells)
        pads = layout.pads_per_cell(die.pitch_um).ravel()
        self.n_cr_pads = float(pads[crit].sum())
        self.group_pads = np.array([min(pads[r * self.cols + c] for r, c in members[g])
                                    for g in gids]) if gids else np.zeros(0)
        if self.has_crit:
            pts = np.concatenate([self.crit_rects[:, [0, 2]], self.crit_rects[:, [1, 2]],
                                  self.crit_rects[:, [0, 3]], self.crit_rects[:, [1, 3]]])
            from scipy.spatial import ConvexHull
            pts = np.unique(pts, axis=0)
            try:
                self.crit_hull = pts[ConvexHull(pts).vertices]
            except Exception:
                self.crit_hull = pts
        self.delta_nm = max_allowed_misalignment(die, cfg.overlay) * 1e3
        self.q = self._recess_fail_prob(cu_pattern_density(die, layout))

    def _rects(self, flat):
        r, c = np.divmod(flat, self.cols)
        return np.column_stack([self.xe[c], self.xe[c + 1], self.ye[r], self.ye[r + 1]])

    def _recess_fail_prob(self, d_cu):
        """Per-pad failure from the physical criteria on the combined height."""
        rp = self.cfg.recess
        lo, hi = height_bounds(rp, d_cu)
        mu, sd = rp.mu_h_nm, rp.sigma_h_nm
        if lo >= hi:
            return 1.0
        if sd == 0:
            return 0.0 if lo < mu < hi else 1.0
        # gap left after expansion, or peel/protrusion above the upper bound
        return float(min(1.0, norm.cdf(lo, mu, sd) + norm.sf(hi, mu, sd)))


def _rect_s_range(rects, site, tx, ty, rot, mag, params):
    """Min and max systematic shift (nm) over each rectangle at a die site."""
    x0 = site[0] + rects[:, [0, 1, 0, 1]]
    y0 = site[1] + rects[:, [2, 2, 3, 3]]
    _, _, s = systematic_shift(params, x0, y0, tx, ty, rot, mag)
    s_max = s.max(axis=1)
    rho = math.hypot(rot, mag) * 1e-6  # nm per nm
    if rho == 0:
        return np.full(len(rects), math.hypot(tx, ty)), s_max
    # s(x) = rho·|x - x*| with x* the zero of the affine field
    det = mag * mag + rot * rot
    xs = -(mag * tx + rot * ty) / det  # mm, since µrad/ppm·mm = nm
    ys = -(mag * ty - rot * tx) / det
    dx = np.maximum(np.maximum(site[0] + rects[:, 0] - xs, xs - site[0] - rects[:, 1]), 0)
    dy = np.maximum(np.maximum(site[1] + rects[:, 2] - ys, ys - site[1] - rects[:, 3]), 0)
    return math.hypot(rot, mag) * np.hypot(dx, dy), s_max


class _Outcome:
    __slots__ = ("ovl", "df", "cr", "total")

    def __init__(self, n):
        self.ovl = np.ones(n, bool)
        self.df = np.ones(n, bool)
        self.cr = np.ones(n, bool)
        self.total = np.ones(n, bool)


def _overlay_draw(rng, p: OverlayParams, n):
    return (rng.normal(p.tx_nm, p.tx_std_nm, n), rng.normal(p.ty_nm, p.ty_std_nm, n),
            rng.normal(p.rotation_urad, p.rotation_std_urad, n),
            rng.normal(p.mag_ppm, p.magnification_std_ppm, n), rng.normal(0, p.sigma1_nm, n))


def overlay_check(ctx: _Context, site, distortion):
    """Overlay pass flags for one die.

    Args:
        ctx: Layout context.
        site: Die center in the coordinates of the distortion field (mm).
        distortion: (tx, ty, rotation, magnification, u).

    Returns:
        (critical_ok, member_ok) where member_ok has one flag per redundant
        member cell.
    """
    tx, ty, rot, mag, u = distortion
    p = ctx.cfg.overlay
    d = ctx.delta_nm
    crit_ok = True
    if ctx.has_crit:
        _, _, s = systematic_shift(p, site[0] + ctx.crit_hull[:, 0], site[1] + ctx.crit_hull[:, 1],
                                   tx, ty, rot, mag)
        crit_ok = s.max() + u <= d
        if crit_ok and u < -d:  # lower side only matters for a large negative draw
            s_min, _ = _rect_s_range(ctx.crit_rects, site, tx, ty, rot, mag, p)
            crit_ok = s_min.min() + u >= -d
    if len(ctx.member_cells):
        s_min, s_max = _rect_s_range(ctx.member_rects, site, tx, ty, rot, mag, p)
        mem_ok = (s_max + u <= d) & (s_min + u >= -d)
    else:
        mem_ok = np.zeros(0, bool)
    return bool(crit_ok), mem_ok


def defect_hits(ctx: _Context, disks_local):
    """Cells hit by disks given in die-local mm (radius µm).

    Returns:
        (critical_hit, hit_member_indices)
    """
    crit_hit = False
    hit = []
    xe, ye, kinds, cols = ctx.xe, ctx.ye, ctx.kinds, ctx.cols
    for x, y, r_um in disks_local:
        r = r_um / 1e3
        c0 = max(0, int(np.searchsorted(xe, x - r, "right")) - 1)
        c1 = min(len(xe) - 2, int(np.searchsorted(xe, x + r, "left")) - 1)
        r0 = max(0, int(np.searchsorted(ye, y - r, "right")) - 1)
        r1 = min(len(ye) - 2, int(np.searchsorted(ye, y + r, "left")) - 1)
        if c0 > c1 or r0 > r1:
            continue
        cc = np.arange(c0, c1 + 1)
        rr = np.arange(r0, r1 + 1)
        dx = np.maximum(np.maximum(xe[cc] - x, x - xe[cc + 1]), 0)
        dy = np.maximum(np.maximum(ye[rr] - y, y - ye[rr + 1]), 0)
        touch = dy[:, None] ** 2 + dx[None, :] ** 2 <= r * r
        if not touch.any():
            continue
        sub = kinds[r0:r1 + 1, c0:c1 + 1]
        if np.any(touch & (sub == CellKind.CRITICAL)):
            crit_hit = True
        red = touch & (sub == CellKind.REDUNDANT)
        if red.any():
            ri, ci = np.nonzero(red)
            hit.extend(ctx.member_of_cell[(ri + r0) * cols + ci + c0].tolist())
    return crit_hit, hit


def _groups_alive(ctx, member_ok):
    """Number of surviving members per group."""
    return np.bincount(ctx.member_owner, weights=member_ok.astype(float),
                       minlength=ctx.n_groups).astype(np.int64)


def _recess_group_fail_prob(ctx, alive):
    """P(some pad position has every surviving copy failing), per group."""
    q = ctx.q
    pads = ctx.group_pads
    if ctx.shared_n:
        k = ctx.shared_n + 1
        n_sets = np.floor(pads / k)
        rest = pads - n_sets * k
        with np.errstate(divide="ignore"):
            log_ok = n_sets * ((k - 1) * np.log1p(-q) + np.log1p((k - 1) * q)) + rest * np.log1p(-q)
        p_fail = -np.expm1(log_ok)
    else:
        with np.errstate(divide="ignore"):
            p_fail = -np.expm1(pads * np.log1p(-np.power(q, alive.astype(float))))
    return np.where(alive > 0, p_fail, 1.0)


def _die_outcomes(ctx, out, i, crit_ovl, mem_ovl, crit_df, mem_df, u_cr, u_groups):
    g_full = ctx.group_size
    ok_ovl = crit_ovl and bool(np.all(_groups_alive(ctx, mem_ovl) > 0)) if ctx.n_groups else crit_ovl
    ok_df = crit_df and bool(np.all(_groups_alive(ctx, mem_df) > 0)) if ctx.n_groups else crit_df
    q = ctx.q
    p_cr_ok = math.exp(ctx.n_cr_pads * math.log1p(-q)) if q < 1 else (0.0 if ctx.n_cr_pads else 1.0)
    crit_rec = u_cr < p_cr_ok
    rec_ok = crit_rec
    tot_ok = crit_ovl and crit_df and crit_rec
    if ctx.n_groups:
        rec_ok = rec_ok and bool(np.all(u_groups >= _recess_group_fail_prob(ctx, g_full)))
        alive = _groups_alive(ctx, mem_ovl & mem_df)
        tot_ok = tot_ok and bool(np.all(u_groups >= _recess_group_fail_prob(ctx, alive)))
    out.ovl[i], out.df[i], out.cr[i], out.total[i] = ok_ovl, ok_df, rec_ok, tot_ok


def _streams(cfg, entity):
    return {ch: np.random.default_rng([cfg.seed, entity, _CH_ID[ch]]) for ch in CHANNELS}


def _run_wafer(ctx: _Context, wafer_id: int, sites):
    cfg = ctx.cfg
    rngs = _streams(cfg, wafer_id)
    n = len(sites)
    out = _Outcome(n)
    n_mem = len(ctx.member_cells)
    on = set(cfg.channels)
    # overlay: one distortion per wafer
    if "overlay" in on:
        tx, ty, rot, mag, u = (float(v[0]) for v in _overlay_draw(rngs["overlay"], cfg.overlay, 1))
    # defects: particles over the whole wafer
    crit_df = np.ones(n, bool)
    mem_hits: dict[int, list] = {}
    if "defect" in on:
        crit_df, mem_hits = _wafer_defects(ctx, rngs["defect"], sites)
    if "recess" in on:
        rr = rngs["recess"]
        u_cr = rr.random(n)
        u_grp = rr.random((n, ctx.n_groups))
    for i in range(n):
        if "overlay" in on:
            c_ovl, m_ovl = overlay_check(ctx, sites[i], (tx, ty, rot, mag, u))
        else:
            c_ovl, m_ovl = True, np.ones(n_mem, bool)
        m_df = np.ones(n_mem, bool)
        if i in mem_hits:
            m_df[mem_hits[i]] = False
        if "recess" in on:
            ucr, ugr = u_cr[i], u_grp[i]
        else:
            ucr, ugr = -1.0, np.full(ctx.n_groups, 2.0)
        _die_outcomes(ctx, out, i, c_ovl, m_ovl, bool(crit_df[i]), m_df, ucr, ugr)
    return out


def sample_wafer_voids(rng, cfg: SimConfig):
    """Particles over a wafer and their voids (W2W morphology)."""
    p = cfg.defect
    R = cfg.wafer_radius_mm
    n = rng.poisson(p.density_cm2 * math.pi * R * R / 100.0)
    rad = R * np.sqrt(rng.random(n))
    phi = rng.random(n) * 2 * math.pi
    t = sample_thickness(rng, p, n)
    return [make_void(r * math.cos(a), r * math.sin(a), r, ti, p, True, cfg.tail_end_ratio)
            for r, a, ti in zip(rad, phi, t)]


def _wafer_defects(ctx, rng, sites):
    cfg = ctx.cfg
    voids = sample_wafer_voids(rng, cfg)
    a, b = ctx.a, ctx.b
    index = {(int(round((x - a / 2) / a)), int(round((y - b / 2) / b))): i
             for i, (x, y) in enumerate(sites)}
    per_die: dict[int, list] = {}
    for v in voids:
        for (x, y, r_um) in v.disks():
            r = r_um / 1e3
            for ix in range(int(math.floor((x - r) / a)), int(math.floor((x + r) / a)) + 1):
                for iy in range(int(math.floor((y - r) / b)), int(math.floor((y + r) / b)) + 1):
                    k = index.get((ix, iy))
                    if k is not None:
                        cx, cy = sites[k]
                        per_die.setdefault(k, []).append((x - cx, y - cy, r_um))
    crit_df = np.ones(len(sites), bool)
    mem_hits = {}
    for k, disks in per_die.items():
        ch, hits = defect_hits(ctx, disks)
        crit_df[k] = not ch
        if hits:
            mem_hits[k] = hits
    return crit_df, mem_hits


def sample_die_voids(rng, p: DefectParams, a_mm: float, b_mm: float, n: int):
    """Main voids on ``n`` dies (D2W morphology, no tails).

    Returns:
        (counts per die, x mm, y mm, radius µm), positions die-local.
    """
    counts = rng.poisson(p.density_cm2 * a_mm * b_mm / 100.0, n)
    tot = int(counts.sum())
    px = (rng.random(tot) - 0.5) * a_mm
    py = (rng.random(tot) - 0.5) * b_mm
    t = sample_thickness(rng, p, tot)
    r_mv = void_geometry(np.hypot(px, py), t, p)[0]
    return counts, px, py, r_mv


def _run_d2w_chunk(ctx: _Context, chunk_id: int, n: int):
    cfg = ctx.cfg
    rngs = _streams(cfg, chunk_id)
    out = _Outcome(n)
    n_mem = len(ctx.member_cells)
    on = set(cfg.channels)
    p = cfg.defect
    a, b = ctx.a, ctx.b
    if "overlay" in on:
        draws = _overlay_draw(rngs["overlay"], cfg.overlay, n)
    if "defect" in on:
        counts, px, py, r_mv = sample_die_voids(rngs["defect"], p, a, b, n)
        starts = np.concatenate([[0], np.cumsum(counts)])
    if "recess" in on:
        rr = rngs["recess"]
        u_cr = rr.random(n)
        u_grp = rr.random((n, ctx.n_groups))
    origin = (0.0, 0.0)
    for i in range(n):
        if "overlay" in on:
            c_ovl, m_ovl = overlay_check(ctx, origin, tuple(float(d[i]) for d in draws))
        else:
            c_ovl, m_ovl = True, np.ones(n_mem, bool)
        c_df, m_df = True, np.ones(n_mem, bool)
        if "defect" in on and counts[i]:
            sl = slice(starts[i], starts[i + 1])
            ch, hits = defect_hits(ctx, zip(px[sl], py[sl], r_mv[sl]))
            c_df = not ch
            m_df[hits] = False
        if "recess" in on:
            ucr, ugr = u_cr[i], u_grp[i]
        else:
            ucr, ugr = -1.0, np.full(ctx.n_groups, 2.0)
        _die_outcomes(ctx, out, i, c_ovl, m_ovl, c_df, m_df, ucr, ugr)
    return out


def _entity_job(args):
    cfg, layout, kind, entity, payload = args
    ctx = _Context(cfg, layout)
    out = _run_wafer(ctx, entity, payload) if kind == "wafer" else _run_d2w_chunk(ctx, entity, payload)
    return np.array([out.ovl.mean(), out.cr.mean(), out.df.mean(), out.total.mean()]), len(out.ovl)


def simulate(cfg: SimConfig, layout: PadBlockGrid) -> YieldReport:
    """Run the Monte Carlo simulation and summarize per-component yields."""
    t0 = time.perf_counter()
    if cfg.mode == "w2w":
        sites = generate_wafer_map(WaferSpec(cfg.wafer_radius_mm, cfg.die, cfg.edge_exclusion_mm))
        jobs = [(cfg, layout, "wafer", w, sites) for w in range(cfg.n_samples)]
    else:
        sizes = [cfg.chunk_dies] * (cfg.n_samples // cfg.chunk_dies)
        if cfg.n_samples % cfg.chunk_dies:
            sizes.append(cfg.n_samples % cfg.chunk_dies)
        jobs = [(cfg, layout, "chunk", c, n) for c, n in enumerate(sizes)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(_entity_job, jobs))
    else:
        results = [_entity_job(j) for j in jobs]
    means = np.array([r[0] for r in results])
    weights = np.array([r[1] for r in results], float)
    y = weights @ means / weights.sum()
    n_dies = int(weights.sum())
    stderr = {}
    for k, name in enumerate(("ovl", "cr", "df", "total")):
        if len(results) > 1:
            dev = means[:, k] - y[k]
            var = float((weights**2 @ dev**2) / weights.sum() ** 2 * len(results) / (len(results) - 1))
            stderr[name] = math.sqrt(var)
        else:
            stderr[name] = math.sqrt(float(y[k] * (1 - y[k])) / n_dies)
    cv = stderr["total"] / float(y[3]) if y[3] > 0 else math.inf
    counts = {"dies": n_dies, "batches": len(results)}
    if cfg.mode == "w2w":
        counts["wafers"] = cfg.n_samples
    return YieldReport(float(y[0]), float(y[1]), float(y[2]), float(y[3]), "simulation", cfg.mode,
                       runtime_s=time.perf_counter() - t0, seed=cfg.seed, sample_counts=counts,
                       cv=cv, stderr=stderr)


def converge(cfg: SimConfig, layout: PadBlockGrid, cv_target: float = 0.01,
             ladder=None, reps: int = 10, cap: int | None = None):
    """Smallest sample count whose repeated runs have CV below the target.

    For each candidate count, ``reps`` runs with independent seeds give the
    CV (std/mean) of the overall yield.

    Returns:
        (n_required, report at that count with the configured seed)

    Raises:
        ConvergenceError: If no count up to ``cap`` meets the target.
    """
    if cv_target <= 0:
        raise ValueError("cv_target must be positive")
    if ladder is None:
        ladder = [1, 2, 3, 5, 10, 20, 50, 100] if cfg.mode == "w2w" else \
            [100, 200, 500, 1000, 2000, 5000, 10000, 20000, 50000]
    if cap is not None:
        ladder = [n for n in ladder if n <= cap]
    cv = math.inf
    for n in ladder:
        ys = []
        for r in range(reps):
            sub = replace(cfg, n_samples=n, seed=int(np.random.SeedSequence([cfg.seed, n, r])
                                                      .generate_state(1)[0]))
            ys.append(simulate(sub, layout).y_total)
        ys = np.array(ys)
        mean = ys.mean()
        cv = 0.0 if np.all(ys == ys[0]) else (ys.std(ddof=1) / mean if mean > 0 else math.inf)
        if cv < cv_target:
            return n, simulate(replace(cfg, n_samples=n), layout)
    raise ConvergenceError(f"CV {cv:.4f} above target {cv_target} at the sample cap")
