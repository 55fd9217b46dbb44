"""Particle-defect yield: void statistics, critical-area tables, Poisson yield.

Units: lengths in µm, defect densities per cm², areas in µm² unless a name
says otherwise.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from hbyield.layout import PadBlockGrid
from hbyield.morphology import (CriticalAreaEngine, disk_radii, rasterize_disk,
                                rasterize_segment_cells, segment_step_um)

UM2_PER_CM2 = 1e8


@dataclass(frozen=True)
class DefectParams:
    """Particle population and void-shape fit parameters.

    Attributes:
        density_cm2: Total particle density D_t.
        t0_um: Minimum particle thickness.
        z: Shape factor of the thickness distribution (> 1).
        k_r, k_r0: Main-void radius fit, r = (k_r·L + k_r0)·√t.
        k_l: Tail-length fit, l = k_l·L·√t.
        k_n: Tail void count fit, n = k_n·L·√t.
        k_s: Tail area fit, S = k_s·L·√t.
    """

    density_cm2: float = 0.1
    t0_um: float = 0.1
    z: float = 3.0
    k_r: float = 1.8e-4
    k_r0: float = 230.0
    k_l: float = 6.2e-2
    k_n: float = 9e-5
    k_s: float = 2.7

    def __post_init__(self):
        if self.z <= 1:
            raise ValueError("z must exceed 1")
        if self.t0_um <= 0:
            raise ValueError("t0 must be positive")
        if min(self.k_r, self.k_r0, self.k_l, self.k_n, self.k_s, self.density_cm2) < 0:
            raise ValueError("fit constants and density must be non-negative")


def thickness_pdf(t, p: DefectParams):
    """Particle density per unit thickness, D(t), for t > t0 (zero below)."""
    t = np.asarray(t, float)
    out = np.where(t > p.t0_um,
                   p.density_cm2 * (p.z - 1) * p.t0_um ** (p.z - 1) / np.maximum(t, p.t0_um) ** p.z,
                   0.0)
    return out if out.ndim else float(out)


def sample_thickness(rng: np.random.Generator, p: DefectParams, size=None):
    """Inverse-CDF draws of particle thickness."""
    u = rng.random(size)
    return p.t0_um * (1.0 - u) ** (-1.0 / (p.z - 1))


def void_geometry(L_mm, t_um, p: DefectParams):
    """(r_mv, l, n, S) for a particle at distance L (mm) with thickness t (µm).

    r_mv and l are in µm, n is a count and S is in µm².
    """
    L = np.asarray(L_mm, float) * 1e3
    rt = np.sqrt(np.asarray(t_um, float))
    return (p.k_r * L + p.k_r0) * rt, p.k_l * L * rt, p.k_n * L * rt, p.k_s * L * rt


# --- tail length ----------------------------------------------------------

def tail_break_um(wafer_r_um: float, p: DefectParams) -> float:
    """Tail length l* = k_l·R·√t0 where the density changes branch."""
    return p.k_l * wafer_r_um * math.sqrt(p.t0_um)


def tail_length_pdf(l, wafer_r_um: float, p: DefectParams):
    """Density of tail lengths per cm² per µm."""
    l = np.asarray(l, float)
    z, dt = p.z, p.density_cm2
    ls = tail_break_um(wafer_r_um, p)
    lo = 2 * dt * (z - 1) * l / (z * p.k_l**2 * wafer_r_um**2 * p.t0_um)
    with np.errstate(divide="ignore"):
        hi = 2 * dt * (z - 1) * (p.k_l**2 * wafer_r_um**2 * p.t0_um) ** (z - 1) / (
            z * np.maximum(l, 1e-300) ** (2 * z - 1))
    out = np.where(l <= ls, lo, hi)
    out = np.where(l < 0, 0.0, out)
    return out if out.ndim else float(out)


def tail_length_cdf(l, wafer_r_um: float, p: DefectParams):
    """Cumulative tail-length count per cm² (tends to D_t)."""
    l = np.maximum(np.asarray(l, float), 0.0)
    z, dt = p.z, p.density_cm2
    ls = tail_break_um(wafer_r_um, p)
    x = l / ls
    with np.errstate(divide="ignore"):
        out = np.where(x <= 1, dt * (z - 1) / z * x**2,
                       dt - dt / z * np.maximum(x, 1.0) ** (2 - 2 * z))
    return out if out.ndim else float(out)


def tail_length_first_moment_above(h, wafer_r_um: float, p: DefectParams):
    """∫_h^∞ l·f_l(l) dl in µm per cm² (infinite when z <= 1.5)."""
    z, dt = p.z, p.density_cm2
    ls = tail_break_um(wafer_r_um, p)
    h = np.maximum(np.asarray(h, float), 0.0)
    if z <= 1.5:
        out = np.full(h.shape, math.inf)
    else:
        c = 2 * dt * (z - 1) * ls ** (2 * z - 2) / z
        upper = c * np.maximum(h, ls) ** (3 - 2 * z) / (2 * z - 3)
        lower = 2 * dt * (z - 1) / (z * ls**2) * (ls**3 - np.minimum(h, ls) ** 3) / 3
        out = upper + lower
    return out if out.ndim else float(out)


# --- main void radius -----------------------------------------------------

def _main_void_terms(die_r_um: float, p: DefectParams):
    z, dt, t0 = p.z, p.density_cm2, p.t0_um
    c, k = p.k_r * die_r_um + p.k_r0, p.k_r0
    pref = dt * (z - 1) * t0 ** (z - 1) / (p.k_r**2 * die_r_um**2)
    a1 = pref * 2 / (z * t0**z)
    a2 = pref * 2 * k ** (2 * z) / (z * (2 * z - 1))
    a3 = -pref * 2 * k / ((z - 0.5) * t0 ** (z - 0.5))
    bracket = ((c ** (2 * z) - k ** (2 * z)) / z
               - (2 * k * c ** (2 * z - 1) - 2 * k ** (2 * z)) / (z - 0.5)
               + (k**2 * c ** (2 * z - 2) - k ** (2 * z)) / (z - 1))
    b = (2 * dt * (z - 1) * t0 ** (z - 1) * c ** (2 * z - 2)
         - 2 * dt * (z - 1) ** 2 * t0 ** (z - 1) / (p.k_r**2 * die_r_um**2) * bracket)
    r_min = k * math.sqrt(t0)
    r_brk = c * math.sqrt(t0)
    return a1, a2, a3, b, r_min, r_brk


def main_void_pdf(r, die_r_um: float, p: DefectParams):
    """Density of main-void radii per cm² per µm for particles on one die."""
    a1, a2, a3, b, r_min, r_brk = _main_void_terms(die_r_um, p)
    r = np.asarray(r, float)
    rr = np.maximum(r, r_min)
    e = 1 - 2 * p.z
    out = np.where(rr < r_brk, a1 * rr + a2 * rr**e + a3, b * rr**e)
    out = np.where(r <= r_min, 0.0, out)
    return out if out.ndim else float(out)


def main_void_cdf(r, die_r_um: float, p: DefectParams):
    """Cumulative main-void count per cm² below radius r."""
    a1, a2, a3, b, r_min, r_brk = _main_void_terms(die_r_um, p)
    z = p.z

    def first(x):
        return a1 * (x**2 - r_min**2) / 2 + a3 * (x - r_min) + a2 * (
            x ** (2 - 2 * z) - r_min ** (2 - 2 * z)) / (2 - 2 * z)

    r = np.asarray(r, float)
    x1 = np.clip(r, r_min, r_brk)
    x2 = np.maximum(r, r_brk)
    out = first(x1) + b * (r_brk ** (2 - 2 * z) - x2 ** (2 - 2 * z)) / (2 * z - 2)
    out = np.where(r <= r_min, 0.0, out)
    return out if out.ndim else float(out)


def main_void_radius_for_tail(mass_fraction: float, die_r_um: float, p: DefectParams) -> float:
    """Radius beyond which at most ``mass_fraction`` of main voids fall."""
    a1, a2, a3, b, r_min, r_brk = _main_void_terms(die_r_um, p)
    target = mass_fraction * p.density_cm2
    if target <= 0:
        return math.inf
    r = (b / ((2 * p.z - 2) * target)) ** (1 / (2 * p.z - 2)) if b > 0 else r_brk
    return max(r, r_brk)


# --- critical-area tables -------------------------------------------------

@dataclass(frozen=True, eq=False)
class CriticalAreaLUT:
    """Critical area per defect descriptor for one layout.

    W2W tables hold, for every orientation ``thetas[j]``, the areas of
    segments of 1..N_j raster cells (``areas[j][N-1]``); ``nodes[j]`` lists
    the cell counts evaluated exactly, others are interpolated linearly.
    D2W tables hold areas for disks with radius in [radii[k], radii[k+1]).
    """

    mode: str
    fingerprint: str
    resolution: tuple
    thetas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    steps_um: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nodes: tuple = ()
    areas: tuple = ()
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    disk_areas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    layout_fingerprint: str = ""

    def __eq__(self, other):
        if not isinstance(other, CriticalAreaLUT) or self.mode != other.mode:
            return False
        if self.fingerprint != other.fingerprint:
            return False
        if self.mode == "w2w":
            return all(np.array_equal(a, b) for a, b in zip(self.areas, other.areas)) and \
                all(np.array_equal(a, b) for a, b in zip(self.nodes, other.nodes))
        return np.array_equal(self.disk_areas, other.disk_areas) and np.array_equal(
            self.radii, other.radii)

    __hash__ = None


def _fingerprint(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
    return h.hexdigest()[:16]


def default_tail_lmax_um(wafer_r_um: float, p: DefectParams, factor: float = 5.0) -> float:
    return factor * tail_break_um(wafer_r_um, p)


def _cell_nodes(n_max: int, n_points: int) -> np.ndarray:
    geo = np.round(np.geomspace(1, n_max, max(2, n_points))).astype(int)
    return np.unique(np.concatenate([[1, 2, n_max - 1, n_max], geo]).clip(1, n_max))


def build_lut_w2w(layout: PadBlockGrid, l_max_um: float, n_theta: int = 16,
                  n_lengths: int = 64, backend=None) -> CriticalAreaLUT:
    """Critical areas of tail segments over orientations in [0, π).

    Segment areas are invariant under reversal up to rasterization, so a
    half turn of orientations covers the full circle.

    Args:
        layout: Pad layout; its cell size sets the raster resolution.
        l_max_um: Longest tail length tabulated; longer tails are
            extrapolated.
        n_theta: Number of orientations.
        n_lengths: Approximate number of exactly evaluated lengths per
            orientation (log spaced in cell count).
        backend: Kernel backend override.
    """
    res = (layout.gx_um, layout.gy_um)
    eng = CriticalAreaEngine(layout, backend)
    thetas = np.arange(n_theta) * math.pi / n_theta
    steps, nodes_all, areas_all = [], [], []
    for th in thetas:
        step = segment_step_um(th, res)
        n_max = max(2, int(math.ceil(l_max_um / step + 0.5)))
        nodes = _cell_nodes(n_max, n_lengths)
        vals = np.array([eng.critical_area(rasterize_segment_cells(int(n), th, res), pad=True)
                         for n in nodes])
        vals = np.maximum.accumulate(vals)
        full = np.interp(np.arange(1, n_max + 1), nodes, vals)
        steps.append(step)
        nodes_all.append(nodes)
        areas_all.append(full)
    fp = _fingerprint("w2w", layout.fingerprint(), res, n_theta, n_lengths, round(l_max_um, 6))
    return CriticalAreaLUT("w2w", fp, res, thetas=thetas, steps_um=np.array(steps),
                           nodes=tuple(nodes_all), areas=tuple(areas_all),
                           layout_fingerprint=layout.fingerprint())


def build_lut_d2w(layout: PadBlockGrid, r_max_um: float, backend=None) -> CriticalAreaLUT:
    """Critical areas of main-void disks, anchored on the die only.

    The disk raster changes only at cell-center distances, so the table is
    exact when keyed on those radii.
    """
    res = (layout.gx_um, layout.gy_um)
    eng = CriticalAreaEngine(layout, backend)
    radii = disk_radii(res, r_max_um)
    vals = np.array([eng.critical_area(rasterize_disk(float(r), res), pad=False) for r in radii])
    fp = _fingerprint("d2w", layout.fingerprint(), res, round(r_max_um, 6))
    return CriticalAreaLUT("d2w", fp, res, radii=radii, disk_areas=np.maximum.accumulate(vals),
                           layout_fingerprint=layout.fingerprint())


def lambda_w2w(lut: CriticalAreaLUT, wafer_r_um: float, p: DefectParams,
               return_tail: bool = False):
    """Expected number of fatal tail defects per die.

    Each segment raster of N cells covers tail lengths in
    [(N-1.5)·step, (N-0.5)·step); the density mass of each interval multiplies
    its area, averaged over orientations. Past the table, the area is
    extrapolated linearly in length.
    """
    if lut.mode != "w2w":
        raise ValueError("lambda_w2w needs a W2W table")
    # all orientations in one pass: concatenated interval edges
    sizes = np.array([len(a) for a in lut.areas])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    a_all = np.concatenate(lut.areas)
    steps = np.repeat(lut.steps_um, sizes)
    n = np.arange(len(a_all)) - np.repeat(starts, sizes) + 1
    hi = (n - 0.5) * steps
    # consecutive intervals share edges; the first starts at zero
    c_hi = tail_length_cdf(hi, wafer_r_um, p)
    c_lo = np.concatenate([[0.0], c_hi[:-1]])
    c_lo[starts] = 0.0
    mass = c_hi - c_lo
    body = np.add.reduceat(a_all * mass, starts)
    last = starts + sizes - 1
    h = hi[last]
    a_end = a_all[last]
    a_prev = np.where(sizes > 1, a_all[np.maximum(last - 1, 0)], a_end)
    slope = (a_end - a_prev) / lut.steps_um
    f_tail = p.density_cm2 - c_hi[last]
    # past the table the area grows linearly in length
    base = a_end - slope * (sizes - 1) * lut.steps_um
    grow = slope > 0
    m1 = tail_length_first_moment_above(np.where(grow, h, np.inf), wafer_r_um, p) \
        if grow.any() else 0.0
    extra = np.where(grow, base * f_tail + slope * np.where(grow, m1, 0.0), a_end * f_tail)
    total = float(body.sum() + extra.sum())
    tail = float(extra.sum())
    k = len(lut.areas)
    lam = total / k / UM2_PER_CM2
    tail_lam = tail / k / UM2_PER_CM2
    if lam > 0 and tail_lam > 0.01 * lam:
        warnings.warn(f"tail extrapolation carries {tail_lam / lam:.1%} of the defect count; "
                      "rebuild the table with a larger l_max", RuntimeWarning, stacklevel=2)
    return (lam, tail_lam) if return_tail else lam


def lambda_d2w(lut: CriticalAreaLUT, die_r_um: float, p: DefectParams,
               return_tail: bool = False):
    """Expected number of fatal main voids per die (area constant between radii)."""
    if lut.mode != "d2w":
        raise ValueError("lambda_d2w needs a D2W table")
    edges = np.append(lut.radii[1:], np.inf)
    cdf_lo = main_void_cdf(lut.radii, die_r_um, p)
    cdf_hi = np.where(np.isinf(edges), p.density_cm2,
                      main_void_cdf(np.where(np.isinf(edges), 0, edges), die_r_um, p))
    mass = np.maximum(cdf_hi - cdf_lo, 0.0)
    contrib = lut.disk_areas * mass
    lam = float(contrib.sum()) / UM2_PER_CM2
    tail_lam = float(contrib[-1]) / UM2_PER_CM2
    return (lam, tail_lam) if return_tail else lam


def yield_df_w2w(lut, wafer_r_um, p) -> float:
    return math.exp(-lambda_w2w(lut, wafer_r_um, p))


def yield_df_d2w(lut, die_r_um, p) -> float:
    return math.exp(-lambda_d2w(lut, die_r_um, p))


def save_lut_csv(lut: CriticalAreaLUT, path) -> None:
    """Write the table as CSV with a fingerprint header line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# mode={lut.mode} fingerprint={lut.fingerprint} "
                 f"layout={lut.layout_fingerprint} res={lut.resolution[0]!r},{lut.resolution[1]!r}\n")
        w = csv.writer(fh)
        if lut.mode == "w2w":
            w.writerow(["l_um", "theta_rad", "area_um2"])
            for th, step, nodes, a in zip(lut.thetas, lut.steps_um, lut.nodes, lut.areas):
                for n in range(1, len(a) + 1):
                    exact = "" if n in set(nodes.tolist()) else "*"
                    w.writerow([repr(float((n - 1) * step)), repr(float(th)), repr(float(a[n - 1])) + exact])
        else:
            w.writerow(["r_um", "area_um2"])
            for r, a in zip(lut.radii, lut.disk_areas):
                w.writerow([repr(float(r)), repr(float(a))])


def load_lut_csv(path) -> CriticalAreaLUT:
    """Read a table written by :func:`save_lut_csv`.

    Interpolated W2W entries carry a trailing ``*`` on the area.
    """
    with open(path, newline="") as fh:
        head = fh.readline()
        if not head.startswith("# "):
            raise ValueError("missing table header")
        meta = dict(kv.split("=", 1) for kv in head[2:].split())
        res = tuple(float(v) for v in meta["res"].split(","))
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if meta["mode"] == "w2w":
        if header != ["l_um", "theta_rad", "area_um2"]:
            raise ValueError("bad W2W table columns")
        by_theta: dict[float, list] = {}
        for l_um, th, a in body:
            by_theta.setdefault(float(th), []).append((float(l_um), a))
        thetas, steps, nodes, areas = [], [], [], []
        for th, entries in by_theta.items():
            step = segment_step_um(th, res)
            thetas.append(th)
            steps.append(step)
            areas.append(np.array([float(a.rstrip("*")) for _, a in entries]))
            nodes.append(np.array([i + 1 for i, (_, a) in enumerate(entries)
                                   if not a.endswith("*")]))
        return CriticalAreaLUT("w2w", meta["fingerprint"], res, thetas=np.array(thetas),
                               steps_um=np.array(steps), nodes=tuple(nodes), areas=tuple(areas),
                               layout_fingerprint=meta["layout"])
    if header != ["r_um", "area_um2"]:
        raise ValueError("bad D2W table columns")
    arr = np.array([[float(x) for x in row] for row in body])
    return CriticalAreaLUT("d2w", meta["fingerprint"], res, radii=arr[:, 0],
                           disk_areas=arr[:, 1], layout_fingerprint=meta["layout"])
