import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_layout
from hbyield.kernels import available_backends
from hbyield.layout import CellKind, PadBlockGrid, build_layout
from hbyield.morphology import (BitGrid, CriticalAreaEngine, StructuringElement, area,
                                critical_area, dilate, disk_radii, intersect_all,
                                rasterize_disk, rasterize_segment, segment_cells,
                                segment_step_um, to_pbm, union_all)
from oracles import brute_critical_area

BACKENDS = sorted(available_backends())


def _naive_dilate(bits, offsets):
    h, w = bits.shape
    out = np.zeros_like(bits)
    for r in range(h):
        for c in range(w):
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and bits[rr, cc]:
                    out[r, c] = True
                    break
    return out


def test_disk_radius_one_cell_is_plus():
    se = rasterize_disk(100.0, (100.0, 100.0))
    assert se.bits.sum() == 5
    assert {tuple(o) for o in se.offsets.tolist()} == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


def test_zero_length_segment_is_single_cell():
    for theta in np.linspace(0, math.pi, 7):
        se = rasterize_segment(0.0, theta, (400.0, 400.0))
        assert se.offsets.tolist() == [[0, 0]]


def test_segment_cell_count_rule():
    # one origin cell plus round(l / step) further cells
    assert segment_cells(3000.0, 0.0, (400.0, 400.0)) == 9
    assert segment_cells(100.0, 0.0, (400.0, 400.0)) == 1
    assert segment_step_um(math.pi / 4, (400.0, 400.0)) == pytest.approx(400 * math.sqrt(2))


@given(st.floats(0, 5000), st.floats(0, math.pi), st.sampled_from([100.0, 200.0, 400.0]))
def test_segment_is_connected_line(length, theta, g):
    se = rasterize_segment(length, theta, (g, g))
    off = se.offsets
    assert len(off) == segment_cells(length, theta, (g, g))
    assert [0, 0] in off.tolist()
    # 8-connected chain with unit progress along the major axis
    major = 1 if abs(math.cos(theta)) >= abs(math.sin(theta)) else 0
    assert len(set(off[:, major].tolist())) == len(off)


@given(st.floats(0, 3000), st.floats(0, math.pi / 2 - 1e-6))
def test_segment_reflection_symmetry(length, theta):
    res = (200.0, 200.0)
    a = rasterize_segment(length, theta, res).offsets
    b = rasterize_segment(length, math.pi - theta, res).offsets
    assert sorted(map(tuple, a.tolist())) == sorted((r, -c) for r, c in b.tolist())


@given(st.floats(0, 2000), st.floats(0, 2000), st.sampled_from([50.0, 100.0, 250.0]))
def test_disk_monotone_in_radius(r1, r2, g):
    lo, hi = sorted((r1, r2))
    a = {tuple(o) for o in rasterize_disk(lo, (g, g)).offsets.tolist()}
    b = {tuple(o) for o in rasterize_disk(hi, (g, g)).offsets.tolist()}
    assert a <= b


def test_disk_radii_are_breakpoints():
    radii = disk_radii((100.0, 100.0), 500.0)
    assert radii[0] == 0.0 and np.all(np.diff(radii) > 0)
    counts = [rasterize_disk(r, (100.0, 100.0)).bits.sum() for r in radii]
    assert np.all(np.diff(counts) > 0)
    # just below a breakpoint the raster equals the previous one
    for r0, r1 in zip(radii[:-1], radii[1:]):
        assert rasterize_disk(r1 - 1e-6, (100.0, 100.0)) == rasterize_disk(r0, (100.0, 100.0))


@pytest.mark.parametrize("backend", BACKENDS)
@given(st.integers(0, 10_000))
def test_dilate_matches_naive(backend, seed):
    rng = np.random.default_rng(seed)
    bits = rng.random((int(rng.integers(1, 12)), int(rng.integers(1, 12)))) < 0.3
    off = np.vstack([[0, 0], rng.integers(-4, 5, size=(int(rng.integers(1, 6)), 2))])
    se = StructuringElement.from_offsets(off)
    got = dilate(BitGrid(bits), se, backend=backend).bits
    assert np.array_equal(got, _naive_dilate(bits, se.offsets.tolist()))


def test_dilate_backends_agree_large():
    rng = np.random.default_rng(1)
    bits = rng.random((300, 280)) < 0.05
    se = rasterize_segment(3000.0, 0.7, (100.0, 100.0))
    outs = [dilate(BitGrid(bits), se, backend=b).bits for b in BACKENDS]
    assert all(np.array_equal(outs[0], o) for o in outs[1:])


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("pad", [True, False])
def test_critical_area_matches_bruteforce(backend, pad):
    rng = np.random.default_rng(2024)
    for i in range(60):
        lay = random_layout(rng, int(rng.integers(2, 9)), int(rng.integers(2, 9)))
        if i % 2:
            se = rasterize_segment(float(rng.uniform(0, 600)), float(rng.uniform(0, math.pi)),
                                   (100.0, 100.0))
        else:
            se = rasterize_disk(float(rng.uniform(0, 350)), (100.0, 100.0))
        want = brute_critical_area(lay, se, pad=pad)
        assert critical_area(lay, se, pad=pad, backend=backend) == pytest.approx(want)


def test_critical_area_truncated_cells_match_bruteforce():
    kinds = np.array([[3, 1, 4], [4, 0, 3]], np.int8)
    groups = np.array([[-1, -1, 0], [0, -1, -1]])
    lay = PadBlockGrid(kinds, groups, 100.0, 100.0, 0.25, 0.15)
    for r in (0.0, 100.0, 150.0, 250.0):
        se = rasterize_disk(r, (100.0, 100.0))
        for pad in (True, False):
            assert critical_area(lay, se, pad) == pytest.approx(brute_critical_area(lay, se, pad))


def test_full_layout_single_cell_defect(full_d2w):
    se = rasterize_disk(0.0, (100.0, 100.0))
    assert critical_area(full_d2w, se, pad=False) == pytest.approx(1e8)


@given(st.integers(0, 10_000))
def test_redundancy_never_increases_area(seed):
    rng = np.random.default_rng(seed)
    lay = random_layout(rng, 6, 6)
    kinds = np.array(lay.kinds)
    kinds[kinds == CellKind.REDUNDANT] = CellKind.CRITICAL
    worst = PadBlockGrid(kinds, np.full(kinds.shape, -1), 100.0, 100.0, 0.6, 0.6)
    se = rasterize_segment(float(rng.uniform(0, 500)), float(rng.uniform(0, math.pi)),
                           (100.0, 100.0))
    assert critical_area(lay, se) <= critical_area(worst, se) + 1e-6


@given(st.integers(0, 10_000), st.floats(0, 400), st.floats(0, 400))
def test_critical_area_monotone_in_disk_radius(seed, r1, r2):
    lay = random_layout(np.random.default_rng(seed), 5, 7)
    eng = CriticalAreaEngine(lay)
    lo, hi = sorted((r1, r2))
    a = eng.critical_area(rasterize_disk(lo, (100.0, 100.0)), pad=False)
    b = eng.critical_area(rasterize_disk(hi, (100.0, 100.0)), pad=False)
    assert a <= b + 1e-6


@given(st.integers(0, 10_000))
def test_inclusion_exclusion(seed):
    rng = np.random.default_rng(seed)
    a = BitGrid(rng.random((7, 9)) < 0.4, 2.5)
    b = BitGrid(rng.random((7, 9)) < 0.4, 2.5)
    assert area(union_all([a, b])) == pytest.approx(area(a) + area(b) - area(intersect_all([a, b])))


def test_grid_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        union_all([BitGrid(np.ones((2, 2))), BitGrid(np.ones((2, 3)))])
    with pytest.raises(ValueError):
        intersect_all([])


def test_structuring_element_validation():
    with pytest.raises(ValueError):
        StructuringElement(np.zeros((2, 2)), (0, 0))
    with pytest.raises(ValueError):
        StructuringElement(np.ones((2, 2)), (3, 0))
    with pytest.raises(ValueError):
        rasterize_disk(-1.0, (100.0, 100.0))
    with pytest.raises(ValueError):
        rasterize_segment(-1.0, 0.0, (100.0, 100.0))


def test_pbm_output():
    text = to_pbm(BitGrid(np.array([[1, 0, 0], [0, 1, 1]], bool)))
    assert text.splitlines() == ["P1", "3 2", "0 1 1", "1 0 0"]


def test_pattern_layouts_match_bruteforce(die):
    for pattern in ("peripheral", "centralized", "sparse"):
        lay = build_layout(pattern, die, (1000.0, 1000.0))
        se = rasterize_segment(2500.0, 0.4, (1000.0, 1000.0))
        assert critical_area(lay, se) == pytest.approx(brute_critical_area(lay, se))
