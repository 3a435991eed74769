import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from loopfield.grid import (Grid, OrientedLoop, PixelSet, SegmentFamily, boundary_curves, perimeter,
                            pixel_components, segment_separation_check, trace_loops)


def block(g, i0, j0, w, h):
    return PixelSet.from_ij(g, [(i, j) for i in range(i0, i0 + w) for j in range(j0, j0 + h)])


def test_indexing_is_bijective():
    g = Grid(3, 2)
    assert sorted(g.edge_id(*g.edge_key(e)) for e in range(g.n_edges)) == list(range(g.n_edges))
    assert all(g.vertex_id(*g.vertex_ij(v)) == v for v in range(g.n_vertices))
    assert all(g.cell_id(*g.cell_ij(c)) == c for c in range(g.n_cells))
    assert g.n_edges == 3 * 3 + 4 * 2


def test_edge_between_signs():
    g = Grid(2, 2)
    assert g.edge_between((0, 0), (1, 0)) == (g.edge_id("h", 0, 0), 1)
    assert g.edge_between((1, 0), (0, 0)) == (g.edge_id("h", 0, 0), -1)
    assert g.edge_between((1, 2), (1, 1)) == (g.edge_id("v", 1, 1), -1)
    with pytest.raises(ValueError):
        g.edge_between((0, 0), (1, 1))


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(0, 3)
    with pytest.raises(ValueError):
        Grid(2, 2, h=0.0)


@pytest.mark.parametrize("cells, expected", [
    ([], 0.0),
    ([(0, 0)], 4.0),
    ([(0, 0), (1, 1)], 8.0),
    ([(0, 0), (1, 0)], 6.0),
])
def test_perimeter_examples(cells, expected):
    assert perimeter(PixelSet.from_ij(Grid(3, 3), cells)) == expected


def test_perimeter_scales_with_h():
    assert perimeter(PixelSet.from_ij(Grid(2, 2, h=0.5), [(0, 0)])) == 2.0


def test_components_examples():
    g = Grid(8, 8)
    assert len(pixel_components(PixelSet.from_ij(g, [(0, 0), (1, 1)]))) == 2
    assert len(pixel_components(block(g, 0, 0, 3, 3))) == 1
    far = PixelSet(g, block(g, 0, 0, 3, 3).cells + (g.cell_id(7, 7),))
    comps = pixel_components(far)
    assert [len(c) for c in comps] == [9, 1]


def test_boundary_block_and_annulus():
    g = Grid(7, 7)
    outer, holes = boundary_curves(block(g, 1, 1, 3, 3))
    assert [lp.length for lp in outer] == [12.0] and holes == []
    ring = PixelSet(g, tuple(c for c in block(g, 1, 1, 5, 5).cells if c != g.cell_id(3, 3)))
    outer, holes = boundary_curves(ring)
    assert [lp.length for lp in outer] == [20.0]
    assert [lp.length for lp in holes] == [4.0]
    assert outer[0].orientation == "ccw" and holes[0].orientation == "cw"


def test_diagonal_cells_split_at_corner():
    g = Grid(2, 2)
    outer, holes = boundary_curves(PixelSet.from_ij(g, [(0, 0), (1, 1)]))
    assert [lp.n_edges for lp in outer] == [4, 4] and holes == []


def test_oriented_loop_validation():
    with pytest.raises(ValueError):
        OrientedLoop(((0, 0), (1, 0), (1, 1)))
    with pytest.raises(ValueError):
        OrientedLoop(((0, 0), (2, 0), (2, 1), (0, 1)))
    with pytest.raises(ValueError):
        OrientedLoop(((0, 0), (1, 0), (1, 1), (1, 0), (0, 0), (0, 1)))
    lp = OrientedLoop(((1, 1), (0, 1), (0, 0), (1, 0)), h=2.0)
    assert lp.vertices[0] == (0, 0)
    assert lp.length == 8.0 and lp.signed_area == 4.0
    assert lp.reversed().orientation == "cw"


@pytest.mark.parametrize("gap, strict, expected", [
    (1.0, False, True),
    (1.0, True, False),
    (1.5, True, True),
    (0.5, False, False),
])
def test_segment_separation(gap, strict, expected):
    F = SegmentFamily((((0, 0), (1, 0)), ((1 + gap, 0), (2 + gap, 0))))
    ok, per = segment_separation_check(F, strict=strict)
    assert ok is expected and all(v is expected for v in per)


def test_segment_separation_single_and_degenerate():
    assert segment_separation_check(SegmentFamily((((0, 0), (1, 0)),)))[0]
    with pytest.raises(ValueError):
        segment_separation_check(SegmentFamily((((0, 0), (0, 0)), ((3, 0), (4, 0)))))


def test_separation_is_asymmetric_in_lengths():
    F = SegmentFamily((((0, 0), (1, 0)), ((2, 0), (6, 0))))
    ok, per = segment_separation_check(F)
    assert per == [True, False] and not ok


masks = arrays(np.bool_, st.tuples(st.integers(1, 9), st.integers(1, 9)))


@settings(max_examples=150, deadline=None)
@given(masks)
def test_boundary_invariants(mask):
    ny, nx = mask.shape
    g = Grid(nx, ny)
    P = PixelSet.from_mask(g, mask)
    comps = pixel_components(P)
    assert sum(perimeter(c) for c in comps) == perimeter(P)
    outer, holes = boundary_curves(P)
    loops = outer + holes
    assert sum(lp.n_edges for lp in loops) * g.h == perimeter(P)
    used = [e for lp in loops for e in g.loop_edges(lp.vertices)[0].tolist()]
    assert len(used) == len(set(used))
    assert all(lp.signed_area2 > 0 for lp in outer) and all(lp.signed_area2 < 0 for lp in holes)
    for lp in loops:
        assert len(set(lp.vertices)) == lp.n_edges


@settings(max_examples=100, deadline=None)
@given(masks)
def test_outer_loop_idempotence(mask):
    ny, nx = mask.shape
    g = Grid(nx, ny)
    for lp in boundary_curves(PixelSet.from_mask(g, mask))[0]:
        outer, holes = boundary_curves(lp.interior(g))
        assert outer == [lp] and holes == []


def test_trace_loops_empty():
    assert trace_loops(np.zeros((3, 3), bool)) == []
