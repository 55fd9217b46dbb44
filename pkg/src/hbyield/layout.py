"""Wafers, dies, gridded pad-block layouts and redundancy plans.

Coordinates: die-local positions are in mm with the origin at the die center,
x to the right and y upward. Grid row ``r`` grows with y and column ``c``
grows with x, so cell ``(0, 0)`` is the lower-left block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np


class LayoutError(ValueError):
    """Raised for invalid or infeasible layout geometry."""


class CellKind(IntEnum):
    EMPTY = 0
    DUMMY = 1
    POWER = 2
    CRITICAL = 3
    REDUNDANT = 4


_TOKENS = {CellKind.EMPTY: "E", CellKind.DUMMY: "D", CellKind.POWER: "P", CellKind.CRITICAL: "C"}
_FROM_TOKEN = {v: k for k, v in _TOKENS.items()}


@dataclass(frozen=True)
class DieSpec:
    """Die footprint and pad geometry.

    Attributes:
        width_mm: Die width ``a`` in mm.
        height_mm: Die height ``b`` in mm.
        pitch_um: Bonding pitch ``p`` in µm.
        top_pad_um: Top pad diameter ``d1`` in µm.
        bottom_pad_um: Bottom pad diameter ``d2`` in µm.
    """

    width_mm: float = 10.0
    height_mm: float = 10.0
    pitch_um: float = 1.0
    top_pad_um: float = 0.3
    bottom_pad_um: float = 0.5

    def __post_init__(self):
        for name in ("width_mm", "height_mm", "pitch_um", "top_pad_um", "bottom_pad_um"):
            if not getattr(self, name) > 0:
                raise LayoutError(f"{name} must be positive")
        if self.top_pad_um > self.bottom_pad_um:
            raise LayoutError("top pad must not be larger than bottom pad")
        if self.bottom_pad_um >= self.pitch_um:
            raise LayoutError("bottom pad diameter must be smaller than the pitch")

    @property
    def r1_um(self) -> float:
        return self.top_pad_um / 2

    @property
    def r2_um(self) -> float:
        return self.bottom_pad_um / 2

    @property
    def area_mm2(self) -> float:
        return self.width_mm * self.height_mm

    @property
    def effective_radius_um(self) -> float:
        """Radius of the disk with the die's area, in µm."""
        return math.sqrt(self.area_mm2 / math.pi) * 1e3


@dataclass(frozen=True)
class WaferSpec:
    radius_mm: float = 150.0
    die: DieSpec = field(default_factory=DieSpec)
    edge_exclusion_mm: float = 0.0

    def __post_init__(self):
        if not self.radius_mm > 0:
            raise LayoutError("wafer radius must be positive")
        if self.edge_exclusion_mm < 0 or self.edge_exclusion_mm >= self.radius_mm:
            raise LayoutError("edge exclusion must lie in [0, R)")

    @property
    def usable_radius_mm(self) -> float:
        return self.radius_mm - self.edge_exclusion_mm


def generate_wafer_map(wafer: WaferSpec) -> np.ndarray:
    """Place whole dies on a grid whose lines pass through the wafer center.

    Returns:
        Array of shape (M, 2) of die centers in mm, ordered row-major from the
        (-x, -y) corner.

    Raises:
        LayoutError: If no die fits inside the usable radius.
    """
    a, b = wafer.die.width_mm, wafer.die.height_mm
    rad = wafer.usable_radius_mm
    nx = int(math.ceil(rad / a)) + 1
    ny = int(math.ceil(rad / b)) + 1
    ix = np.arange(-nx, nx)
    iy = np.arange(-ny, ny)
    # candidate die occupies [i*a, (i+1)*a] x [j*b, (j+1)*b]
    gx, gy = np.meshgrid(ix, iy)
    x0, y0 = gx * a, gy * b
    far_x = np.maximum(np.abs(x0), np.abs(x0 + a))
    far_y = np.maximum(np.abs(y0), np.abs(y0 + b))
    ok = far_x**2 + far_y**2 <= rad**2 * (1 + 1e-12)
    if not ok.any():
        raise LayoutError("no die fits on the wafer")
    cx = (x0 + a / 2)[ok]
    cy = (y0 + b / 2)[ok]
    order = np.lexsort((cx, cy))
    return np.column_stack([cx[order], cy[order]])


@dataclass(frozen=True, eq=False)
class PadBlockGrid:
    """Gridded die layout with one pad-block kind per cell.

    Attributes:
        kinds: (rows, cols) int8 array of :class:`CellKind` values.
        groups: (rows, cols) int64 array; redundancy group id for REDUNDANT
            cells and -1 elsewhere.
        gx_um: Cell width in µm.
        gy_um: Cell height in µm.
        die_width_mm: Die width; the last column may be truncated.
        die_height_mm: Die height; the last row may be truncated.
        shared_n: Number of main pads sharing one spare pad inside each
            redundant block (0 for dedicated block-level groups).
    """

    kinds: np.ndarray
    groups: np.ndarray
    gx_um: float
    gy_um: float
    die_width_mm: float
    die_height_mm: float
    shared_n: int = 0

    def __post_init__(self):
        kinds = np.array(self.kinds, dtype=np.int8)
        groups = np.array(self.groups, dtype=np.int64)
        if kinds.ndim != 2 or kinds.shape != groups.shape or kinds.size == 0:
            raise LayoutError("kinds and groups must be matching non-empty 2-D arrays")
        red = kinds == CellKind.REDUNDANT
        if np.any(groups[red] < 0) or np.any(groups[~red] != -1):
            raise LayoutError("group ids must be set exactly on redundant cells")
        rows = math.ceil(self.die_height_mm * 1e3 / self.gy_um - 1e-9)
        cols = math.ceil(self.die_width_mm * 1e3 / self.gx_um - 1e-9)
        if kinds.shape != (rows, cols):
            raise LayoutError(f"grid shape {kinds.shape} does not cover the die ({rows}x{cols})")
        if self.shared_n == 0 and red.any():
            _, counts = np.unique(groups[red], return_counts=True)
            if counts.min() < 2:
                raise LayoutError("dedicated redundancy groups need at least 2 members")
        kinds.setflags(write=False)
        groups.setflags(write=False)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "groups", groups)

    def __eq__(self, other):
        if not isinstance(other, PadBlockGrid):
            return NotImplemented
        return (
            np.array_equal(self.kinds, other.kinds)
            and np.array_equal(self.groups, other.groups)
            and (self.gx_um, self.gy_um, self.die_width_mm, self.die_height_mm, self.shared_n)
            == (other.gx_um, other.gy_um, other.die_width_mm, other.die_height_mm, other.shared_n)
        )

    __hash__ = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.kinds.shape

    @property
    def rows(self) -> int:
        return self.kinds.shape[0]

    @property
    def cols(self) -> int:
        return self.kinds.shape[1]

    @property
    def col_widths_um(self) -> np.ndarray:
        w = np.full(self.cols, self.gx_um)
        w[-1] = self.die_width_mm * 1e3 - self.gx_um * (self.cols - 1)
        return w

    @property
    def row_heights_um(self) -> np.ndarray:
        h = np.full(self.rows, self.gy_um)
        h[-1] = self.die_height_mm * 1e3 - self.gy_um * (self.rows - 1)
        return h

    def cell_weights(self) -> np.ndarray:
        """Fraction of a full cell covered by each (possibly truncated) cell."""
        return np.outer(self.row_heights_um / self.gy_um, self.col_widths_um / self.gx_um)

    def mask(self, kind: CellKind) -> np.ndarray:
        return self.kinds == kind

    @property
    def functional(self) -> np.ndarray:
        return (self.kinds == CellKind.CRITICAL) | (self.kinds == CellKind.REDUNDANT)

    def group_members(self) -> dict[int, list[tuple[int, int]]]:
        """Map group id to member cells in row-major order."""
        out: dict[int, list[tuple[int, int]]] = {}
        rr, cc = np.nonzero(self.kinds == CellKind.REDUNDANT)
        for r, c in zip(rr.tolist(), cc.tolist()):
            out.setdefault(int(self.groups[r, c]), []).append((r, c))
        return out

    def cell_bounds_mm(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges of the cell columns and rows in die-local mm."""
        xe = np.concatenate([[0.0], np.cumsum(self.col_widths_um)]) / 1e3 - self.die_width_mm / 2
        ye = np.concatenate([[0.0], np.cumsum(self.row_heights_um)]) / 1e3 - self.die_height_mm / 2
        return xe, ye

    def pads_per_cell(self, pitch_um: float) -> np.ndarray:
        """Pad count of every cell: floor(width/p) * floor(height/p)."""
        nx = np.floor(self.col_widths_um / pitch_um + 1e-9)
        ny = np.floor(self.row_heights_um / pitch_um + 1e-9)
        return np.outer(ny, nx)

    def fingerprint(self) -> str:
        # arrays are read-only, so the digest can be kept
        cached = self.__dict__.get("_fingerprint")
        if cached is not None:
            return cached
        import hashlib

        h = hashlib.sha256()
        h.update(self.kinds.tobytes())
        h.update(self.groups.tobytes())
        h.update(repr((self.shape, self.gx_um, self.gy_um, self.die_width_mm,
                       self.die_height_mm, self.shared_n)).encode())
        digest = h.hexdigest()[:16]
        object.__setattr__(self, "_fingerprint", digest)
        return digest


@dataclass(frozen=True)
class RedundancyPlan:
    """Redundancy scheme and the main/replica cells of every group.

    ``scheme`` is ``"none"``, ``"dedicated"`` or ``"shared"``. For shared
    redundancy the groups are pad-level and live inside single blocks, so
    ``groups`` lists each block as its own main with no replica cell.
    """

    scheme: str
    groups: tuple = ()
    spacing_um: float | None = None
    shared_n: int | None = None


def _grid_dims(die: DieSpec, gx: float, gy: float) -> tuple[int, int]:
    if gx <= 0 or gy <= 0:
        raise LayoutError("resolution must be positive")
    if gx > die.width_mm * 1e3 or gy > die.height_mm * 1e3:
        raise LayoutError("resolution is coarser than the die")
    rows = math.ceil(die.height_mm * 1e3 / gy - 1e-9)
    cols = math.ceil(die.width_mm * 1e3 / gx - 1e-9)
    return rows, cols


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _ring_index(rows: int, cols: int) -> np.ndarray:
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    return np.minimum(np.minimum(r, rows - 1 - r), np.minimum(c, cols - 1 - c))


def _angle_order(rows: int, cols: int) -> np.ndarray:
    r = np.arange(rows)[:, None] - (rows - 1) / 2
    c = np.arange(cols)[None, :] - (cols - 1) / 2
    return np.arctan2(np.broadcast_to(r, (rows, cols)), np.broadcast_to(c, (rows, cols)))


def _peripheral_cells(rows: int, cols: int, n: int) -> np.ndarray:
    """Boolean mask with n cells filled ring by ring from the die boundary."""
    ring = _ring_index(rows, cols)
    ang = _angle_order(rows, cols)
    out = np.zeros((rows, cols), bool)
    left = n
    for k in range(int(ring.max()) + 1):
        if left <= 0:
            break
        rr, cc = np.nonzero(ring == k)
        if left >= rr.size:
            out[rr, cc] = True
            left -= rr.size
        else:
            order = np.argsort(ang[rr, cc], kind="stable")
            pick = np.floor(np.arange(left) * rr.size / left).astype(int)
            out[rr[order[pick]], cc[order[pick]]] = True
            left = 0
    return out


def _central_rect(rows: int, cols: int, n: int) -> tuple[int, int]:
    """Centered rectangle (h, w) with area closest to n and die-like aspect."""
    best = None
    for h in range(1, rows + 1):
        if (rows - h) % 2:
            continue
        for w in range(1, cols + 1):
            if (cols - w) % 2:
                continue
            # within one grid row of the target count, prefer the die's aspect
            if abs(h * w - n) > min(rows, cols):
                continue
            key = (round(abs(math.log((h / w) / (rows / cols))), 9), abs(h * w - n))
            if best is None or key < best[0]:
                best = (key, h, w)
    if best is None:  # one even and one odd dimension forbids exact centering
        h = max(1, min(rows, round(math.sqrt(n * rows / cols))))
        w = max(1, min(cols, round(n / h)))
        return h, w
    return best[1], best[2]


def _chebyshev_from_center(rows: int, cols: int) -> np.ndarray:
    r = np.abs(np.arange(rows)[:, None] - (rows - 1) / 2) / rows
    c = np.abs(np.arange(cols)[None, :] - (cols - 1) / 2) / cols
    return np.maximum(r, c)


def _pair_cells(cells: list[tuple[int, int]], spacing_cells: tuple[float, float],
                tol_cells: float, rng: np.random.Generator, strict: bool):
    """Greedy min-degree matching of cells at a target center distance.

    Args:
        cells: Candidate cells.
        spacing_cells: Target spacing in units of (row height, column width)
            given as a scale pair (sy, sx) so that distance is
            ``hypot(dr * sy, dc * sx)``; the target itself is 1.
        tol_cells: Accepted deviation from the target, in the same units.
        rng: Tie-breaking generator.
        strict: Raise on stranded cells instead of returning them.

    Returns:
        (pairs, stranded) lists.
    """
    sy, sx = spacing_cells
    index = {cell: i for i, cell in enumerate(cells)}
    ry = int(math.ceil((1 + tol_cells) / sy))
    rx = int(math.ceil((1 + tol_cells) / sx))
    offsets = []
    for dr in range(-ry, ry + 1):
        for dc in range(-rx, rx + 1):
            if (dr, dc) != (0, 0) and abs(math.hypot(dr * sy, dc * sx) - 1) <= tol_cells + 1e-12:
                offsets.append((dr, dc))
    nbrs = []
    for (r, c) in cells:
        nb = [index[(r + dr, c + dc)] for dr, dc in offsets if (r + dr, c + dc) in index]
        nbrs.append(nb)
    alive = np.ones(len(cells), bool)
    degree = np.array([len(nb) for nb in nbrs], dtype=np.int64)
    tiebreak = rng.random(len(cells))
    pairs, stranded = [], []
    # process cells by current degree; lazily re-sorted in small batches
    import heapq

    heap = [(int(degree[i]), float(tiebreak[i]), i) for i in range(len(cells))]
    heapq.heapify(heap)
    while heap:
        d, t, i = heapq.heappop(heap)
        if not alive[i] or d != degree[i]:
            continue
        cand = [j for j in nbrs[i] if alive[j]]
        if not cand:
            alive[i] = False
            stranded.append(cells[i])
            if strict:
                raise LayoutError(f"no partner at the requested spacing for block {cells[i]}")
            continue
        cand.sort(key=lambda j: (degree[j], tiebreak[j]))
        j = cand[0]
        alive[i] = alive[j] = False
        pairs.append((cells[i], cells[j]))
        for k in (i, j):
            for m in nbrs[k]:
                if alive[m]:
                    degree[m] -= 1
                    heapq.heappush(heap, (int(degree[m]), float(tiebreak[m]), m))
    return pairs, stranded


def build_layout(pattern: str, die: DieSpec, resolution: tuple[float, float],
                 fractions: tuple[float, float, float] = (0.2, 0.5, 0.3),
                 seed: int = 0, pair_spacing_um: float | None = None) -> PadBlockGrid:
    """Build one of the canonical pad layouts.

    Critical cells are placed by the pattern. Redundant cells are placed next
    to them (continuing the ring, growing outward from the centered block, or
    scattered for Sparse) and paired into two-member groups at
    ``pair_spacing_um`` (default: one cell). Unpaired leftovers become dummy.

    Args:
        pattern: ``full``, ``sparse``, ``peripheral`` or ``centralized``.
        die: Die geometry.
        resolution: Cell size (gx, gy) in µm.
        fractions: (critical, redundant, dummy) area fractions summing to 1.
        seed: Seed for Sparse placement and pairing tie-breaks.
        pair_spacing_um: Center distance between paired redundant cells.

    Returns:
        The layout grid.
    """
    pattern = pattern.lower()
    gx, gy = resolution
    rows, cols = _grid_dims(die, gx, gy)
    n = rows * cols
    fc, fr, fd = fractions
    if min(fractions) < 0 or abs(fc + fr + fd - 1) > 1e-9:
        raise LayoutError("fractions must be non-negative and sum to 1")
    if pattern == "full":
        fc, fr = 1.0, 0.0
    elif pattern not in ("sparse", "peripheral", "centralized"):
        raise LayoutError(f"unknown pattern {pattern!r}")
    n_cr = min(n, _round_half_up(fc * n))
    n_rd = min(n - n_cr, _round_half_up(fr * n))
    rng = np.random.default_rng(seed)

    crit = np.zeros((rows, cols), bool)
    if pattern == "full":
        crit[:] = True
        red_priority = None
    elif pattern == "peripheral":
        crit = _peripheral_cells(rows, cols, n_cr)
        ring = _ring_index(rows, cols).astype(float)
        red_priority = ring + _angle_order(rows, cols) * 1e-3
    elif pattern == "centralized":
        h, w = _central_rect(rows, cols, n_cr)
        r0, c0 = (rows - h) // 2, (cols - w) // 2
        crit[r0:r0 + h, c0:c0 + w] = True
        red_priority = _chebyshev_from_center(rows, cols) + _angle_order(rows, cols) * 1e-6
    else:
        k = max(1, int(math.floor(math.sqrt(n / max(n_cr, 1)))))
        srows, scols = math.ceil(rows / k), math.ceil(cols / k)
        chosen = rng.choice(srows * scols, size=min(n_cr, srows * scols), replace=False)
        for s in np.sort(chosen):
            sr, sc = divmod(int(s), scols)
            r = min(rows - 1, sr * k + int(rng.integers(k)))
            c = min(cols - 1, sc * k + int(rng.integers(k)))
            crit[r, c] = True
        left = n_cr - int(crit.sum())
        if left > 0:  # clipped super-cells can collide on the last row/column
            free = np.flatnonzero(~crit.ravel())
            crit.ravel()[rng.choice(free, size=left, replace=False)] = True
        red_priority = rng.random((rows, cols))

    kinds = np.full((rows, cols), int(CellKind.DUMMY), np.int8)
    kinds[crit] = CellKind.CRITICAL
    groups = np.full((rows, cols), -1, np.int64)
    if n_rd > 0:
        free = np.flatnonzero(~crit.ravel())
        order = free[np.argsort(red_priority.ravel()[free], kind="stable")]
        red_idx = order[:n_rd]
        cells = [divmod(int(i), cols) for i in np.sort(red_idx)]
        spacing = pair_spacing_um if pair_spacing_um is not None else min(gx, gy)
        pairs, _ = _pair_cells(cells, (gy / spacing, gx / spacing),
                               0.5 * min(gx, gy) / spacing, rng, strict=False)
        for gid, (m, rep) in enumerate(pairs):
            for (r, c) in (m, rep):
                kinds[r, c] = CellKind.REDUNDANT
                groups[r, c] = gid
    return PadBlockGrid(kinds, groups, float(gx), float(gy), die.width_mm, die.height_mm)


def build_random_redundant_layout(die: DieSpec, block_size_um: float, spacing_um: float,
                                  seed: int = 0, scheme: str = "dedicated",
                                  shared_n: int = 20, max_tries: int = 20):
    """Die fully covered by redundant pads, paired at a given spacing.

    Args:
        die: Die geometry.
        block_size_um: Square block size.
        spacing_um: Main-to-replica center distance for dedicated pairing.
        seed: Pairing seed; retries derive new streams from it.
        scheme: ``dedicated``, ``none`` (every block critical) or ``shared``
            (``shared_n`` main pads share one spare pad inside each block).
        shared_n: Mains per spare for the shared scheme.
        max_tries: Matching attempts before reporting a stranded block.

    Returns:
        (layout, plan)

    Raises:
        LayoutError: If some block has no partner at the requested spacing.
    """
    rows, cols = _grid_dims(die, block_size_um, block_size_um)
    g = block_size_um
    if scheme == "none" or (scheme == "dedicated" and spacing_um == 0):
        kinds = np.full((rows, cols), int(CellKind.CRITICAL), np.int8)
        grid = PadBlockGrid(kinds, np.full((rows, cols), -1), g, g, die.width_mm, die.height_mm)
        return grid, RedundancyPlan("none")
    if scheme == "shared":
        if shared_n < 1:
            raise LayoutError("shared_n must be >= 1")
        kinds = np.full((rows, cols), int(CellKind.REDUNDANT), np.int8)
        groups = np.arange(rows * cols).reshape(rows, cols)
        grid = PadBlockGrid(kinds, groups, g, g, die.width_mm, die.height_mm, shared_n=shared_n)
        plan = RedundancyPlan("shared", tuple(((divmod(i, cols),), ()) for i in range(rows * cols)),
                              shared_n=shared_n)
        return grid, plan
    if scheme != "dedicated":
        raise LayoutError(f"unknown redundancy scheme {scheme!r}")
    if (rows * cols) % 2:
        raise LayoutError("an odd number of blocks cannot be paired")
    cells = [(r, c) for r in range(rows) for c in range(cols)]
    ss = np.random.SeedSequence(seed)
    last = None
    for child in ss.spawn(max_tries):
        try:
            pairs, _ = _pair_cells(cells, (g / spacing_um, g / spacing_um),
                                   0.5 * g / spacing_um, np.random.default_rng(child), strict=True)
            break
        except LayoutError as exc:
            last = exc
    else:
        raise last
    kinds = np.full((rows, cols), int(CellKind.REDUNDANT), np.int8)
    groups = np.full((rows, cols), -1, np.int64)
    rng_roles = np.random.default_rng([seed, 1]).random(len(pairs)) < 0.5
    plan_groups = []
    for gid, ((a, b), swap) in enumerate(zip(pairs, rng_roles)):
        main, rep = (b, a) if swap else (a, b)
        groups[main] = gid
        groups[rep] = gid
        plan_groups.append(((main,), (rep,)))
    grid = PadBlockGrid(kinds, groups, g, g, die.width_mm, die.height_mm)
    return grid, RedundancyPlan("dedicated", tuple(plan_groups), spacing_um=spacing_um)


def cu_pattern_density(die: DieSpec, layout: PadBlockGrid) -> float:
    """Cu area fraction: bottom-pad area per pitch cell times non-empty fraction."""
    w = layout.cell_weights()
    filled = float((w * (layout.kinds != CellKind.EMPTY)).sum() / w.sum())
    return math.pi * die.r2_um**2 / die.pitch_um**2 * filled


def write_layout(path, layout: PadBlockGrid, plan: RedundancyPlan | None = None) -> None:
    """Write the layout CSV (and the plan CSV next to it when given)."""
    path = Path(path)
    lines = [f"#die_mm={layout.die_width_mm!r},{layout.die_height_mm!r}",
             f"#grid_um={layout.gx_um!r},{layout.gy_um!r}"]
    if layout.shared_n:
        lines.append(f"#shared={layout.shared_n}")
    for r in range(layout.rows):
        toks = []
        for c in range(layout.cols):
            k = CellKind(int(layout.kinds[r, c]))
            toks.append(f"R:{layout.groups[r, c]}" if k == CellKind.REDUNDANT else _TOKENS[k])
        lines.append(",".join(toks))
    path.write_text("\n".join(lines) + "\n")
    if plan is not None and plan.groups:
        rows = ["group_id,cell_row,cell_col,role"]
        for gid, (mains, reps) in enumerate(plan.groups):
            for role, cells in (("main", mains), ("replica", reps)):
                for (r, c) in cells:
                    rows.append(f"{gid},{r},{c},{role}")
        path.with_suffix(".plan.csv").write_text("\n".join(rows) + "\n")


def read_layout(path) -> PadBlockGrid:
    """Parse a layout CSV written by :func:`write_layout`."""
    die = grid = None
    shared = 0
    kinds, groups = [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            key = key.strip()
            if key == "die_mm":
                die = tuple(float(v) for v in val.split(","))
            elif key == "grid_um":
                grid = tuple(float(v) for v in val.split(","))
            elif key == "shared":
                shared = int(val)
            else:
                raise LayoutError(f"unknown header {key!r}")
            continue
        krow, grow = [], []
        for tok in line.split(","):
            tok = tok.strip()
            if tok.startswith("R:"):
                krow.append(int(CellKind.REDUNDANT))
                grow.append(int(tok[2:]))
            elif tok in _FROM_TOKEN:
                krow.append(int(_FROM_TOKEN[tok]))
                grow.append(-1)
            else:
                raise LayoutError(f"unknown cell token {tok!r}")
        kinds.append(krow)
        groups.append(grow)
    if die is None or grid is None:
        raise LayoutError("layout file needs #die_mm and #grid_um headers")
    if len({len(r) for r in kinds}) != 1:
        raise LayoutError("ragged layout rows")
    return PadBlockGrid(np.array(kinds), np.array(groups), grid[0], grid[1], die[0], die[1],
                        shared_n=shared)
