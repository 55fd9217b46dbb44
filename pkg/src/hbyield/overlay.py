"""Overlay yield: systematic distortion field, allowed misalignment, pad/die POS."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.spatial import ConvexHull
from scipy.special import erfc

from hbyield.layout import DieSpec, PadBlockGrid

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class OverlayParams:
    """Overlay distortion parameters.

    Lengths are in nm, rotation in µrad and magnification in ppm. The
    ``*_std`` fields give the wafer-to-wafer (W2W) or die-to-die (D2W)
    spread of each systematic term. Magnification may instead be given as a
    warpage ``warpage_um`` that maps through ``k_mag_per_m``.
    """

    sigma1_nm: float = 20.0
    tx_nm: float = 0.0
    ty_nm: float = 0.0
    rotation_urad: float = 0.05
    magnification_ppm: float | None = 0.05
    tx_std_nm: float = 20.0
    ty_std_nm: float = 20.0
    rotation_std_urad: float = 0.01
    magnification_std_ppm: float = 0.01
    warpage_um: float | None = None
    k_mag_per_m: float = 0.09
    k_ca: float = 0.5
    k_cd: float = 0.5

    def __post_init__(self):
        if self.sigma1_nm < 0:
            raise ValueError("sigma1 must be non-negative")
        if not (0 <= self.k_ca <= 1 and 0 <= self.k_cd <= 1):
            raise ValueError("k_ca and k_cd must lie in [0, 1]")
        if (self.magnification_ppm is None) == (self.warpage_um is None):
            raise ValueError("give exactly one of magnification_ppm and warpage_um")
        for name in ("tx_std_nm", "ty_std_nm", "rotation_std_urad", "magnification_std_ppm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def mag_ppm(self) -> float:
        if self.magnification_ppm is not None:
            return self.magnification_ppm
        # E = k_mag * B, B in m
        return self.k_mag_per_m * self.warpage_um * 1e-6 * 1e6


def systematic_shift(params: OverlayParams, x_mm, y_mm, tx_nm=None, ty_nm=None,
                     rot_urad=None, mag_ppm=None):
    """Systematic misalignment (nm) at positions in mm.

    The optional arguments override the parameter means (used when sampling).
    µrad·mm and ppm·mm both equal nm.

    Returns:
        (dx, dy, s) arrays in nm.
    """
    tx = params.tx_nm if tx_nm is None else tx_nm
    ty = params.ty_nm if ty_nm is None else ty_nm
    a = params.rotation_urad if rot_urad is None else rot_urad
    e = params.mag_ppm if mag_ppm is None else mag_ppm
    x = np.asarray(x_mm, float)
    y = np.asarray(y_mm, float)
    dx = tx - a * y + e * x
    dy = ty + a * x + e * y
    return dx, dy, np.hypot(dx, dy)


def contact_area(s, r1: float, r2: float):
    """Overlap area (µm²) of two disks of radii r1 <= r2 at center distance s."""
    if r1 > r2:
        raise ValueError("contact_area expects r1 <= r2")
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    full = s <= r2 - r1
    out[full] = math.pi * r1 * r1
    mid = (~full) & (s < r1 + r2)
    sm = s[mid]
    # half-chord from the factored Heron form and half-angles via atan2,
    # which stay accurate near internal tangency where arccos does not
    outer = np.sqrt(np.maximum((r1 + r2 - sm) * (sm + r1 + r2), 0.0))
    d = r2 - r1
    h = 0.5 * outer * np.sqrt(np.maximum((sm - d) / sm, 0.0)) * np.sqrt((sm + d) / sm)
    x1 = sm / 2 - d * (r1 + r2) / (2 * sm)
    t1 = np.arctan2(h, x1)
    t2 = np.arctan2(h, sm - x1)
    out[mid] = t1 * r1**2 + t2 * r2**2 - sm * h
    return out if out.ndim else float(out)


@lru_cache(maxsize=256)
def contact_root(r1: float, r2: float, k_ca: float, tol: float = 1e-6) -> float:
    """Misalignment s* (µm) where the contact area falls to k_ca·π·r1²."""
    target = k_ca * math.pi * r1 * r1
    lo, hi = max(0.0, r2 - r1), r1 + r2
    if k_ca >= 1:
        return lo
    if k_ca <= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if contact_area(mid, r1, r2) >= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def max_allowed_misalignment(die: DieSpec, params: OverlayParams) -> float:
    """Largest misalignment (µm) keeping enough contact area and spacing."""
    if params.k_ca > 1:
        raise ValueError("k_ca above 1 asks for more contact than the pad has")
    p, d1, d2 = die.pitch_um, die.top_pad_um, die.bottom_pad_um
    cd_term = (1 - params.k_cd) * p - d1 / 2 + (params.k_cd - 0.5) * d2
    return min(contact_root(die.r1_um, die.r2_um, params.k_ca), cd_term)


def norm_cdf(x):
    """Standard normal CDF via erfc (accurate in both tails)."""
    return 0.5 * erfc(-np.asarray(x, float) / _SQRT2)


def pad_pos(delta, s, sigma1):
    """P(|s + u| <= delta) for u ~ N(0, sigma1²); same units for all inputs."""
    delta = np.asarray(delta, float)
    s = np.asarray(s, float)
    if sigma1 == 0:
        out = (np.abs(s) <= delta).astype(float)
    else:
        # upper and lower exceedance probabilities, complement taken once
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            fail = norm_cdf((s - delta) / sigma1) + norm_cdf((-delta - s) / sigma1)
        out = np.clip(1.0 - fail, 0.0, 1.0)
    return out if out.ndim else float(out)


_VERTEX_CACHE: dict = {}


def functional_vertices(layout: PadBlockGrid) -> np.ndarray:
    """Convex-hull vertices (mm, die-local) of all functional cell corners."""
    key = layout.fingerprint()
    if key not in _VERTEX_CACHE:
        if len(_VERTEX_CACHE) > 64:
            _VERTEX_CACHE.clear()
        _VERTEX_CACHE[key] = _functional_vertices(layout)
    return _VERTEX_CACHE[key]


def _functional_vertices(layout: PadBlockGrid) -> np.ndarray:
    func = layout.functional
    if not func.any():
        raise ValueError("layout has no functional cells")
    xe, ye = layout.cell_bounds_mm()
    rr, cc = np.nonzero(func)
    xs = np.concatenate([xe[cc], xe[cc + 1], xe[cc], xe[cc + 1]])
    ys = np.concatenate([ye[rr], ye[rr], ye[rr + 1], ye[rr + 1]])
    pts = np.unique(np.column_stack([xs, ys]), axis=0)
    if len(pts) < 3:
        return pts
    try:
        return pts[ConvexHull(pts).vertices]
    except Exception:  # collinear corners
        return pts


@lru_cache(maxsize=16)
def _hermite(order: int):
    x, w = hermegauss(order)
    return x, w / w.sum()


def _nodes(mean: float, std: float, order: int):
    if std == 0 or order <= 1:
        return np.array([mean]), np.array([1.0])
    x, w = _hermite(order)
    return mean + std * x, w


def _axes(params: OverlayParams, orders, radius_mm: float = 0.0):
    """1-D Gauss-Hermite nodes and weights for (Tx, Ty, rotation, magnification)."""
    nt, nr = orders
    # rotation/magnification spreads below 1% of sigma1 at the farthest
    # point barely move s; a single node at the mean suffices there
    floor = 0.01 * max(params.sigma1_nm, 1e-9)
    nr_rot = nr if params.rotation_std_urad * radius_mm > floor else 1
    nr_mag = nr if params.magnification_std_ppm * radius_mm > floor else 1
    return [_nodes(params.tx_nm, params.tx_std_nm, nt),
            _nodes(params.ty_nm, params.ty_std_nm, nt),
            _nodes(params.rotation_urad, params.rotation_std_urad, nr_rot),
            _nodes(params.mag_ppm, params.magnification_std_ppm, nr_mag)]


def _tensor(grids):
    vals = np.meshgrid(*[g[0] for g in grids], indexing="ij")
    wts = np.meshgrid(*[g[1] for g in grids], indexing="ij")
    w = np.prod(np.stack([a.ravel() for a in wts]), axis=0)
    return [v.ravel() for v in vals], w


def _quadrature(params: OverlayParams, orders, radius_mm: float = 0.0):
    """Tensor-product nodes (tx, ty, rot, mag) and weights."""
    return _tensor(_axes(params, orders, radius_mm))


def die_pos(sites_mm, vertices_mm, delta_um: float, params: OverlayParams,
            tx=None, ty=None, rot=None, mag=None) -> np.ndarray:
    """Die POS for each site at one distortion: pad POS at the worst vertex."""
    sites = np.atleast_2d(np.asarray(sites_mm, float))
    x = sites[:, None, 0] + vertices_mm[None, :, 0]
    y = sites[:, None, 1] + vertices_mm[None, :, 1]
    _, _, s = systematic_shift(params, x, y, tx, ty, rot, mag)
    return pad_pos(delta_um * 1e3, s.max(axis=1), params.sigma1_nm)


def expected_die_pos(sites_mm, layout: PadBlockGrid, die: DieSpec, params: OverlayParams,
                     orders=(5, 3)) -> np.ndarray:
    """Die POS averaged over the spread of the systematic terms.

    Gauss-Hermite tensor quadrature over (Tx, Ty, rotation, magnification);
    terms with zero spread use a single node at the mean.
    """
    verts = functional_vertices(layout)
    delta = max_allowed_misalignment(die, params)
    sites = np.atleast_2d(np.asarray(sites_mm, float))
    x = sites[:, None, 0] + verts[None, :, 0]
    y = sites[:, None, 1] + verts[None, :, 1]
    radius = float(np.hypot(x, y).max())
    axes = _axes(params, orders, radius)
    # when every node leaves the worst pad deep inside the window the
    # average equals the mean-distortion value to better than 1e-9
    far = [float(np.abs(a[0]).max()) for a in axes]
    bound = math.hypot(far[0], far[1]) + (far[2] + far[3]) * radius
    if params.sigma1_nm > 0 and norm_cdf((bound - delta * 1e3) / params.sigma1_nm) < 1e-9:
        axes = _axes(params, (1, 1), radius)
    (tx, ty, rot, mag), w = _tensor(axes)
    _, _, s = systematic_shift(params, x[None], y[None], tx[:, None, None], ty[:, None, None],
                               rot[:, None, None], mag[:, None, None])
    pos = pad_pos(delta * 1e3, s.max(axis=2), params.sigma1_nm)
    return np.clip(w @ pos, 0.0, 1.0)


def die_pos_w2w(die_site_mm, layout: PadBlockGrid, die: DieSpec, params: OverlayParams) -> float:
    """POS of one die at its wafer site using the mean distortion."""
    verts = functional_vertices(layout)
    return float(die_pos(die_site_mm, verts, max_allowed_misalignment(die, params), params)[0])


def yield_ovl_w2w(sites_mm, layout: PadBlockGrid, die: DieSpec, params: OverlayParams,
                  orders=(5, 3)) -> float:
    """Mean die POS over all wafer sites."""
    return float(expected_die_pos(sites_mm, layout, die, params, orders).mean())


def yield_ovl_d2w(layout: PadBlockGrid, die: DieSpec, params: OverlayParams,
                  orders=(5, 3)) -> float:
    """Die POS with the distortion evaluated in die-local coordinates."""
    return float(expected_die_pos([[0.0, 0.0]], layout, die, params, orders)[0])
