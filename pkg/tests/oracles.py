"""Independent reference computations used by the tests.

Each oracle takes a different route from the package code: exhaustive
enumeration, direct numerical quadrature of the defining integrals, or
high-precision arithmetic.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import integrate

from hbyield.layout import CellKind


def brute_critical_area(layout, se, pad=True, margin=None):
    """Count anchor cells whose translated element kills the die.

    A defect anchored at cell a covers a + o for every element offset o. It
    kills the die if it covers a critical cell or every member of a group.
    Anchors outside the die (only with ``pad``) count as full cells.
    """
    rows, cols = layout.shape
    off = [tuple(o) for o in se.offsets.tolist()]
    if margin is None:
        margin = int(np.abs(se.offsets).max()) + 1
    crit = {(int(r), int(c)) for r, c in zip(*np.nonzero(layout.kinds == CellKind.CRITICAL))}
    groups = [set(m) for m in layout.group_members().values()]
    rr = range(-margin, rows + margin) if pad else range(rows)
    cc = range(-margin, cols + margin) if pad else range(cols)
    w = layout.cell_weights()
    total = 0.0
    for ar in rr:
        for ac in cc:
            cells = {(ar + dr, ac + dc) for dr, dc in off}
            if cells & crit or any(g <= cells for g in groups):
                inside = 0 <= ar < rows and 0 <= ac < cols
                total += w[ar, ac] if inside else 1.0
    return total * layout.gx_um * layout.gy_um


def circle_overlap_quad(s, r1, r2):
    """Overlap area of two disks by integrating chord lengths along x.

    x = r1·sin(u) removes the square-root endpoint behaviour of disk 1.
    """
    if s >= r1 + r2:
        return 0.0

    def chord(x):
        a = r1 * r1 - x * x
        b = r2 * r2 - (x - s) ** 2
        if a <= 0 or b <= 0:
            return 0.0
        lo = max(-math.sqrt(a), -math.sqrt(b))
        hi = min(math.sqrt(a), math.sqrt(b))
        return max(0.0, hi - lo)

    def f(u):
        return chord(r1 * math.sin(u)) * r1 * math.cos(u)

    xs = [s - r2, s + r2, (s * s + r1 * r1 - r2 * r2) / (2 * s) if s else 0.0]
    pts = sorted({math.asin(x / r1) for x in xs if -r1 < x < r1})
    val, _ = integrate.quad(f, -math.pi / 2, math.pi / 2, points=pts or None, limit=400,
                            epsabs=1e-14, epsrel=1e-12)
    return val


def thickness_cdf_fraction(x, t0, z):
    """P(t <= x) for the normalized thickness law."""
    return 0.0 if x <= t0 else 1.0 - (t0 / x) ** (z - 1)


def tail_length_cdf_quad(l, wafer_r_um, p):
    """Count (per cm²) of tails not longer than l for uniform particle positions.

    l = k_l·L·√t with L ~ 2L/R² on [0, R], t from the thickness law.
    """
    R = wafer_r_um

    def f(L):
        if L == 0:
            return 2 * L / R**2
        return 2 * L / R**2 * thickness_cdf_fraction((l / (p.k_l * L)) ** 2, p.t0_um, p.z)

    # the integrand is continuous with a kink where the thickness cutoff bites
    kink = l / (p.k_l * math.sqrt(p.t0_um))
    pts = [kink] if 0 < kink < R else None
    val, _ = integrate.quad(f, 0, R, points=pts, limit=200, epsabs=1e-14, epsrel=1e-11)
    return p.density_cm2 * val


def main_void_cdf_quad(r, die_r_um, p):
    """Count (per cm²) of main voids with radius at most r on a die of radius R."""
    R = die_r_um

    def f(L):
        return 2 * L / R**2 * thickness_cdf_fraction((r / (p.k_r * L + p.k_r0)) ** 2, p.t0_um, p.z)

    lk = (r / math.sqrt(p.t0_um) - p.k_r0) / p.k_r
    pts = [lk] if 0 < lk < R else None
    val, _ = integrate.quad(f, 0, R, points=pts, limit=200, epsabs=1e-14, epsrel=1e-11)
    return p.density_cm2 * val


def bonded_fraction_mp(sigma_z_nm, R_um, E_gpa, w, nu):
    """High-precision bonded fraction from the pull-in reach argument."""
    mpmath.mp.dps = 40
    e_star = mpmath.mpf(E_gpa) * 10**9 / (2 * (1 - mpmath.mpf(nu) ** 2))
    sigma = mpmath.sqrt(2) * mpmath.mpf(sigma_z_nm) * mpmath.mpf("1e-9")
    theta = e_star * sigma**1.5 / (mpmath.mpf(w) * mpmath.sqrt(mpmath.mpf(R_um) * mpmath.mpf("1e-6")))
    reach = mpmath.mpf("0.75") * mpmath.pi ** (mpmath.mpf(2) / 3) * theta ** (-mpmath.mpf(2) / 3)
    return float(theta), float(mpmath.erf(reach / mpmath.sqrt(2)))


def pad_pos_quad(delta, s, sigma):
    """P(|s + u| <= delta), u ~ N(0, σ²), by quadrature of the density."""
    if sigma == 0:
        return float(abs(s) <= delta)
    val, _ = integrate.quad(lambda u: math.exp(-0.5 * (u / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi)),
                            -delta - s, delta - s, epsabs=1e-14, epsrel=1e-12,
                            points=[0.0] if -delta - s < 0 < delta - s else None, limit=200)
    return val


def die_count_bruteforce(radius_mm, w_mm, h_mm):
    """Dies on a grid through the origin whose four corners lie in the circle."""
    n = 0
    k = int(radius_mm // min(w_mm, h_mm)) + 2
    for i in range(-k, k):
        for j in range(-k, k):
            corners = [(i * w_mm, j * h_mm), ((i + 1) * w_mm, j * h_mm),
                       (i * w_mm, (j + 1) * h_mm), ((i + 1) * w_mm, (j + 1) * h_mm)]
            if all(x * x + y * y <= radius_mm**2 * (1 + 1e-12) for x, y in corners):
                n += 1
    return n


def equal_mass_edges(cdf, total, n_bins, lo, hi):
    """Bin edges splitting a distribution with CDF ``cdf`` (tending to ``total``) evenly."""
    from scipy.optimize import brentq

    edges = [lo]
    for k in range(1, n_bins):
        target = total * k / n_bins
        edges.append(brentq(lambda x: cdf(x) - target, lo, hi, xtol=1e-10, rtol=1e-13))
    edges.append(math.inf)
    return np.array(edges)


def chi2_pvalue(samples, cdf, total, n_bins=50, lo=0.0, hi=1e9):
    """Pearson χ² goodness-of-fit p value of samples against a CDF."""
    from scipy import stats

    edges = equal_mass_edges(cdf, total, n_bins, lo, hi)
    observed, _ = np.histogram(samples, bins=edges)
    probs = np.diff([cdf(e) if math.isfinite(e) else total for e in edges]) / total
    expected = probs * len(samples)
    return float(stats.chisquare(observed, expected * observed.sum() / expected.sum()).pvalue)
