"""Bit-grid rasterization and dilation used for critical-area extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hbyield import kernels
from hbyield.layout import CellKind, PadBlockGrid


@dataclass(frozen=True, eq=False)
class BitGrid:
    """Dense binary raster with a per-cell area (µm²)."""

    bits: np.ndarray
    cell_area: float = 1.0

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2 or min(bits.shape) < 1:
            raise ValueError("BitGrid needs a non-empty 2-D array")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __eq__(self, other):
        return (isinstance(other, BitGrid) and self.cell_area == other.cell_area
                and np.array_equal(self.bits, other.bits))

    __hash__ = None

    @property
    def shape(self):
        return self.bits.shape

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))


@dataclass(frozen=True, eq=False)
class StructuringElement:
    """Binary defect footprint; ``origin`` is the (row, col) of the anchor cell."""

    bits: np.ndarray
    origin: tuple[int, int]

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        r, c = self.origin
        if bits.ndim != 2 or not bits.any():
            raise ValueError("structuring element needs at least one set bit")
        if not (0 <= r < bits.shape[0] and 0 <= c < bits.shape[1]):
            raise ValueError("origin outside the element")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "origin", (int(r), int(c)))

    def __eq__(self, other):
        return (isinstance(other, StructuringElement) and self.origin == other.origin
                and np.array_equal(self.bits, other.bits))

    __hash__ = None

    @property
    def offsets(self) -> np.ndarray:
        """(k, 2) int64 array of set-bit offsets relative to the origin."""
        rr, cc = np.nonzero(self.bits)
        return np.column_stack([rr - self.origin[0], cc - self.origin[1]]).astype(np.int64)

    @classmethod
    def from_offsets(cls, offsets) -> "StructuringElement":
        off = np.unique(np.asarray(offsets, dtype=np.int64).reshape(-1, 2), axis=0)
        lo = off.min(axis=0)
        hi = off.max(axis=0)
        bits = np.zeros(tuple(hi - lo + 1), bool)
        bits[off[:, 0] - lo[0], off[:, 1] - lo[1]] = True
        return cls(bits, (int(-lo[0]), int(-lo[1])))


def _sym_round(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _bresenham(x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer line from (0, 0) to (x1, y1) as (x, y) points."""
    pts = []
    dx, dy = abs(x1), -abs(y1)
    sx = 1 if x1 > 0 else -1
    sy = 1 if y1 > 0 else -1
    err = dx + dy
    x = y = 0
    while True:
        pts.append((x, y))
        if x == x1 and y == y1:
            return pts
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def segment_cells(length_um: float, theta: float, resolution) -> int:
    """Number of raster cells used for a segment of this length and angle."""
    gx, gy = resolution
    m = max(abs(math.cos(theta)) / gx, abs(math.sin(theta)) / gy)
    # a segment anchored anywhere in a cell spans on average l/step + 1 cells
    return 1 + int(math.floor(length_um * m + 0.5))


def segment_step_um(theta: float, resolution) -> float:
    """Euclidean length covered by one raster cell along direction theta."""
    gx, gy = resolution
    return 1.0 / max(abs(math.cos(theta)) / gx, abs(math.sin(theta)) / gy)


def rasterize_segment_cells(n_cells: int, theta: float, resolution) -> StructuringElement:
    """Bresenham line of exactly ``n_cells`` cells starting at the origin."""
    gx, gy = resolution
    ux, uy = math.cos(theta) / gx, math.sin(theta) / gy
    m = max(abs(ux), abs(uy))
    steps = n_cells - 1
    ex = _sym_round(steps * ux / m)
    ey = _sym_round(steps * uy / m)
    pts = _bresenham(ex, ey)
    return StructuringElement.from_offsets([(y, x) for x, y in pts])


def rasterize_segment(length_um: float, theta: float, resolution) -> StructuringElement:
    """Rasterize a segment of length ``l`` leaving the origin at angle ``theta``.

    The line spans round(l / step) cells beyond the origin cell, where step
    is the Euclidean advance per cell along the major raster axis.
    """
    if length_um < 0:
        raise ValueError("segment length must be non-negative")
    return rasterize_segment_cells(segment_cells(length_um, theta, resolution), theta, resolution)


def disk_radii(resolution, r_max_um: float) -> np.ndarray:
    """Sorted distinct cell-center distances up to ``r_max_um`` (starting at 0)."""
    gx, gy = resolution
    nr = int(r_max_um // gy) + 1
    nc = int(r_max_um // gx) + 1
    dr, dc = np.meshgrid(np.arange(nr + 1) * gy, np.arange(nc + 1) * gx, indexing="ij")
    d = np.unique(np.round(np.hypot(dr, dc), 9))
    return d[d <= r_max_um]


def rasterize_disk(radius_um: float, resolution) -> StructuringElement:
    """Cells whose center lies within ``radius_um`` of the origin cell center."""
    if radius_um < 0:
        raise ValueError("radius must be non-negative")
    gx, gy = resolution
    nr = int(radius_um // gy)
    nc = int(radius_um // gx)
    dr, dc = np.meshgrid(np.arange(-nr, nr + 1), np.arange(-nc, nc + 1), indexing="ij")
    inside = np.hypot(dr * gy, dc * gx) <= radius_um * (1 + 1e-9)
    return StructuringElement(inside, (nr, nc))


def dilate(image: BitGrid, se: StructuringElement, backend=None) -> BitGrid:
    """Anchor-set dilation: cell p is set iff the element placed at p hits the image.

    Equals the Minkowski sum of the image with the reflected element; output
    has the input's shape.
    """
    return BitGrid(kernels.dilate(image.bits, se.offsets, backend), image.cell_area)


def _check_same(grids):
    if not grids:
        raise ValueError("need at least one grid")
    shape = grids[0].shape
    if any(g.shape != shape for g in grids):
        raise ValueError("grid dimensions differ")


def intersect_all(grids) -> BitGrid:
    _check_same(grids)
    return BitGrid(np.logical_and.reduce([g.bits for g in grids]), grids[0].cell_area)


def union_all(grids) -> BitGrid:
    _check_same(grids)
    return BitGrid(np.logical_or.reduce([g.bits for g in grids]), grids[0].cell_area)


def area(grid: BitGrid) -> float:
    return grid.popcount * grid.cell_area


def to_pbm(grid: BitGrid) -> str:
    """Plain PBM (P1) text of the grid, top row first."""
    rows = [" ".join("1" if b else "0" for b in row) for row in grid.bits[::-1]]
    return f"P1\n{grid.shape[1]} {grid.shape[0]}\n" + "\n".join(rows) + "\n"


class CriticalAreaEngine:
    """Precomputed layout masks for repeated critical-area queries.

    Redundancy groups are bucketed by their member offsets relative to the
    first member. A group with offsets d_k fails at anchor a iff the element
    at a hits every member, i.e. a lies in q1 - K with
    K = {o in SE : o + d_k in SE for all k}. The union over a bucket is then
    one dilation of the bucket's first-member bitmap by K.
    """

    def __init__(self, layout: PadBlockGrid, backend=None):
        self.layout = layout
        self.backend = backend
        kinds = layout.kinds
        self.critical = kinds == CellKind.CRITICAL
        buckets: dict[tuple, list[tuple[int, int]]] = {}
        for members in layout.group_members().values():
            if len(members) == 1:
                self.critical[members[0]] = True
                continue
            q1 = members[0]
            rel = tuple((r - q1[0], c - q1[1]) for r, c in members[1:])
            buckets.setdefault(rel, []).append(q1)
        self.buckets = [(np.array(rel, dtype=np.int64), np.array(firsts)) for rel, firsts in
                        buckets.items()]
        self.weights = layout.cell_weights()
        self.cell_area = layout.gx_um * layout.gy_um

    def critical_area(self, se: StructuringElement, pad: bool = True) -> float:
        """Critical area (µm²) for one structuring element.

        Args:
            se: Defect footprint.
            pad: Count anchors outside the die whose footprint reaches it
                (wafer-plane area). With ``pad=False`` anchors are restricted
                to the die.
        """
        off = se.offsets
        rows, cols = self.layout.shape
        if pad:
            top = max(0, int(off[:, 0].max()))
            bot = max(0, int(-off[:, 0].min()))
            lef = max(0, int(off[:, 1].max()))
            rig = max(0, int(-off[:, 1].min()))
        else:
            top = bot = lef = rig = 0
        H, W = rows + top + bot, cols + lef + rig
        crit = np.zeros((H, W), np.uint8)
        crit[top:top + rows, lef:lef + cols] = self.critical
        hit = kernels.dilate(crit, off, self.backend)
        if self.buckets:
            offset_set = {tuple(o) for o in off.tolist()}
            for rel, firsts in self.buckets:
                core = [o for o in offset_set
                        if all((o[0] + dr, o[1] + dc) in offset_set for dr, dc in rel.tolist())]
                if not core:
                    continue
                img = np.zeros((H, W), np.uint8)
                img[firsts[:, 0] + top, firsts[:, 1] + lef] = 1
                hit |= kernels.dilate(img, np.array(core, np.int64), self.backend)
        w = np.ones((H, W))
        w[top:top + rows, lef:lef + cols] = self.weights
        return float((w * hit).sum() * self.cell_area)


def critical_area(layout: PadBlockGrid, se: StructuringElement, pad: bool = True,
                  backend=None) -> float:
    """Area of anchors where the defect kills a critical cell or a whole group."""
    return CriticalAreaEngine(layout, backend).critical_area(se, pad)
