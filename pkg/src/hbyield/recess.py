"""Cu recess yield: pad-height window, roughness-limited bonding, peeling stress."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from hbyield.layout import CellKind, DieSpec, PadBlockGrid
from hbyield.overlay import norm_cdf


@dataclass(frozen=True)
class RecessParams:
    """Recess and bonding-interface parameters.

    Pad heights are in nm (negative means recessed). ``bonding_curve``
    optionally replaces the default bonded-fraction curve with a table of
    (theta_ad, A_b*) points.
    """

    mu_top_nm: float = -10.0
    sigma_top_nm: float = 1.0
    mu_bot_nm: float = -10.0
    sigma_bot_nm: float = 1.0
    cu_expansion_nm: float = 29.0
    sigma_z_nm: float = 1.0
    asperity_radius_um: float = 1.0
    youngs_gpa: float = 73.0
    poisson: float = 0.17
    adhesion_j_m2: float = 1.2
    dielectric_um: float = 1.5
    k_peel: float = 6.55e15
    h0_nm: float = 75.0
    bonding_curve: tuple | None = None

    def __post_init__(self):
        if self.sigma_top_nm < 0 or self.sigma_bot_nm < 0:
            raise ValueError("height spreads must be non-negative")
        if min(self.youngs_gpa, self.adhesion_j_m2, self.dielectric_um) <= 0:
            raise ValueError("E_d, w and t_d must be positive")
        if self.cu_expansion_nm < 0:
            raise ValueError("Cu expansion must be non-negative")

    @property
    def mu_h_nm(self) -> float:
        return self.mu_top_nm + self.mu_bot_nm

    @property
    def sigma_h_nm(self) -> float:
        return math.hypot(self.sigma_top_nm, self.sigma_bot_nm)


def cu_expansion_from_anneal(k_exp_per_k: float, t_anneal_c: float, t_ref_c: float,
                             pad_depth_nm: float) -> float:
    """Linear thermal estimate of the total pad-pair expansion in nm."""
    return k_exp_per_k * (t_anneal_c - t_ref_c) * pad_depth_nm


def adhesion_parameter(sigma_z_nm, asperity_radius_um, youngs_gpa, adhesion_j_m2,
                       poisson: float = 0.17) -> float:
    """Dimensionless adhesion parameter E*·σ^(3/2)/(w·R^(1/2)) of two rough faces."""
    e_star = youngs_gpa * 1e9 / (2 * (1 - poisson**2))
    sigma = math.sqrt(2) * sigma_z_nm * 1e-9  # two rough faces
    return e_star * sigma**1.5 / (adhesion_j_m2 * math.sqrt(asperity_radius_um * 1e-6))


def effective_contact_area(sigma_z_nm, asperity_radius_um=1.0, youngs_gpa=73.0,
                           adhesion_j_m2=1.2, poisson=0.17, bonding_curve=None) -> float:
    """Bonded area fraction A_b* of two rough surfaces.

    Default curve: an asperity bonds when its height lies within the JKR
    pull-in reach of the mean plane; the reach in units of the combined
    roughness is 0.75·π^(2/3)·θ^(-2/3), and Gaussian heights give
    A_b* = erf(reach/√2). A table of (theta, A_b*) points overrides this and
    is interpolated in log(theta).
    """
    if sigma_z_nm <= 0:
        return 1.0
    theta = adhesion_parameter(sigma_z_nm, asperity_radius_um, youngs_gpa, adhesion_j_m2, poisson)
    if bonding_curve is not None:
        pts = np.asarray(bonding_curve, float)
        order = np.argsort(pts[:, 0])
        th, ab = np.log(pts[order, 0]), pts[order, 1]
        if np.any(np.diff(ab) > 0):
            raise ValueError("bonding curve must be non-increasing in theta")
        return float(np.clip(np.interp(math.log(theta), th, ab), 0.0, 1.0))
    reach = 0.75 * math.pi ** (2 / 3) * theta ** (-2 / 3)
    return float(erf(reach / math.sqrt(2)))


def tolerable_peeling_stress(params: RecessParams) -> float:
    """σ_tol = A_b*·√(2·E_d·w/t_d) in MPa."""
    ab = effective_contact_area(params.sigma_z_nm, params.asperity_radius_um, params.youngs_gpa,
                                params.adhesion_j_m2, params.poisson, params.bonding_curve)
    return ab * stress_scale_mpa(params.youngs_gpa, params.adhesion_j_m2, params.dielectric_um)


def stress_scale_mpa(youngs_gpa, adhesion_j_m2, dielectric_um) -> float:
    return math.sqrt(2 * youngs_gpa * 1e9 * adhesion_j_m2 / (dielectric_um * 1e-6)) / 1e6


def height_bounds(params: RecessParams, d_cu: float) -> tuple[float, float]:
    """(ζ−, ζ+) in nm for a Cu pattern density ``d_cu``."""
    zeta_lo = -params.cu_expansion_nm
    if d_cu <= 0:
        return zeta_lo, 0.0
    h_peel = params.h0_nm + tolerable_peeling_stress(params) * 1e6 / (params.k_peel * d_cu) * 1e9
    return zeta_lo, min(0.0, h_peel)


def pad_fail_prob(params: RecessParams, d_cu: float) -> float:
    """Probability that a pad pair's height falls outside (ζ−, ζ+)."""
    lo, hi = height_bounds(params, d_cu)
    mu, sd = params.mu_h_nm, params.sigma_h_nm
    if lo >= hi:
        return 1.0
    if sd == 0:
        return 0.0 if lo < mu < hi else 1.0
    return float(min(1.0, norm_cdf((lo - mu) / sd) + norm_cdf((mu - hi) / sd)))


def pad_pos_recess(params: RecessParams, d_cu: float) -> float:
    return 1.0 - pad_fail_prob(params, d_cu)


def log_group_pos(q: float, members: int, pads: float, shared_n: int = 0) -> float:
    """Log survival of a redundant block or block group.

    Dedicated: ``pads`` pad groups of ``members`` copies each; a pad group
    survives if any copy does. Shared: inside one block, sets of
    ``shared_n`` mains plus one spare survive with at most one failure;
    pads left over after forming full sets have no spare.
    """
    if shared_n:
        k = shared_n + 1
        n_sets, rest = divmod(int(pads), k)
        # P(at most one of k fails) = (1-q)^k + k q (1-q)^(k-1)
        log_ok = (k - 1) * math.log1p(-q) + math.log1p(-q + k * q) if q < 1 else -math.inf
        return n_sets * log_ok + rest * (math.log1p(-q) if q < 1 else -math.inf)
    if q >= 1:
        return -math.inf
    return pads * math.log1p(-q**members)


def yield_from_counts(q: float, n_cr: float, groups=(), shared_n: int = 0) -> float:
    """POS^N_cr times the group terms, evaluated in log space.

    Args:
        q: Per-pad failure probability.
        n_cr: Number of critical pads.
        groups: Iterable of (members, pads_per_member) per redundancy group.
        shared_n: Pad-level sharing factor (0 for dedicated groups).
    """
    if q <= 0:
        return 1.0
    if q >= 1:
        return 0.0 if (n_cr > 0 or len(groups)) else 1.0
    log_y = n_cr * math.log1p(-q)
    for m, pads in groups:
        log_y += log_group_pos(q, m, pads, shared_n)
    return math.exp(log_y)


def recess_counts(layout: PadBlockGrid, pitch_um: float):
    """(N_cr, [(members, pads), ...]) from a layout."""
    pads = layout.pads_per_cell(pitch_um)
    n_cr = float(pads[layout.kinds == CellKind.CRITICAL].sum())
    groups = [(len(m), float(min(pads[c] for c in m))) for m in layout.group_members().values()]
    return n_cr, groups


def yield_recess(layout: PadBlockGrid, params: RecessParams, die: DieSpec,
                 d_cu: float | None = None) -> float:
    """Die yield against recess failures for the pads in ``layout``."""
    from hbyield.layout import cu_pattern_density

    if d_cu is None:
        d_cu = cu_pattern_density(die, layout)
    q = pad_fail_prob(params, d_cu)
    n_cr, groups = recess_counts(layout, die.pitch_um)
    return yield_from_counts(q, n_cr, groups, layout.shared_n)
