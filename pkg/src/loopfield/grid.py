"""Pixel-grid geometry: grids, pixel sets, perimeters, components and boundary loops.

Indexing conventions
--------------------
* vertices ``(i, j)`` with ``0 <= i <= nx`` and ``0 <= j <= ny``, located at
  ``origin + h * (i, j)``; flat id ``j * (nx + 1) + i``.
* cells ``(i, j)`` with ``0 <= i < nx`` and ``0 <= j < ny``; flat id ``j * nx + i``.
  Boolean cell masks are stored with shape ``(ny, nx)`` so that ``mask.ravel()``
  follows the flat cell ids.
* horizontal edge ``("h", i, j)`` joins vertex ``(i, j)`` to ``(i + 1, j)``;
  vertical edge ``("v", i, j)`` joins ``(i, j)`` to ``(i, j + 1)``.  The
  canonical direction of an edge is from its first to its second vertex
  (+x or +y).  Horizontal edges come first in the flat edge numbering.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    h: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ValueError(f"grid needs at least one cell, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise ValueError(f"cell size must be positive, got {self.h}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_vertices(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_hedges(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n_vedges(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_edges(self) -> int:
        return self.n_hedges + self.n_vedges

    def cell_id(self, i: int, j: int) -> int:
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise IndexError(f"cell ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return j * self.nx + i

    def cell_ij(self, c: int) -> tuple[int, int]:
        return c % self.nx, c // self.nx

    def vertex_id(self, i: int, j: int) -> int:
        if not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise IndexError(f"vertex ({i}, {j}) outside grid")
        return j * (self.nx + 1) + i

    def vertex_ij(self, v: int) -> tuple[int, int]:
        return v % (self.nx + 1), v // (self.nx + 1)

    def vertex_xy(self, i, j):
        return self.origin[0] + self.h * np.asarray(i), self.origin[1] + self.h * np.asarray(j)

    def edge_id(self, kind: str, i: int, j: int) -> int:
        if kind == "h":
            if not (0 <= i < self.nx and 0 <= j <= self.ny):
                raise IndexError(f"horizontal edge ({i}, {j}) outside grid")
            return j * self.nx + i
        if kind == "v":
            if not (0 <= i <= self.nx and 0 <= j < self.ny):
                raise IndexError(f"vertical edge ({i}, {j}) outside grid")
            return self.n_hedges + j * (self.nx + 1) + i
        raise ValueError(f"edge kind must be 'h' or 'v', got {kind!r}")

    def edge_key(self, e: int) -> tuple[str, int, int]:
        e = int(e)
        if e < self.n_hedges:
            return "h", e % self.nx, e // self.nx
        e -= self.n_hedges
        return "v", e % (self.nx + 1), e // (self.nx + 1)

    def edge_vertices(self, e: int) -> tuple[tuple[int, int], tuple[int, int]]:
        """Tail and head of edge ``e`` in its canonical direction."""
        kind, i, j = self.edge_key(e)
        return ((i, j), (i + 1, j)) if kind == "h" else ((i, j), (i, j + 1))

    def edge_between(self, a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
        """Return ``(edge id, sign)`` for the step ``a -> b``; sign is +1 along the canonical direction."""
        (ia, ja), (ib, jb) = a, b
        di, dj = ib - ia, jb - ja
        if dj == 0 and abs(di) == 1:
            return self.edge_id("h", min(ia, ib), ja), di
        if di == 0 and abs(dj) == 1:
            return self.edge_id("v", ia, min(ja, jb)), dj
        raise ValueError(f"vertices {a} and {b} are not grid neighbours")

    def loop_edges(self, vertices) -> tuple[np.ndarray, np.ndarray]:
        """Edge ids and canonical-direction signs of the closed walk through ``vertices``."""
        a = np.asarray(vertices, dtype=np.int64).reshape(-1, 2)
        return self.step_edges(a, np.roll(a, -1, axis=0))

    def step_edges(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Edge ids and signs of the unit steps ``a[k] -> b[k]`` (integer ``(n, 2)`` arrays)."""
        di, dj = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
        if np.any(np.abs(di) + np.abs(dj) != 1):
            raise ValueError("closed walk has a step between non-adjacent vertices")
        horiz = dj == 0
        ids = np.where(
            horiz,
            a[:, 1] * self.nx + np.minimum(a[:, 0], b[:, 0]),
            self.n_hedges + np.minimum(a[:, 1], b[:, 1]) * (self.nx + 1) + a[:, 0],
        )
        return ids, di + dj

    def edge_endpoint_ids(self) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised tail and head vertex ids for every edge."""
        nx, ny = self.nx, self.ny
        jh, ih = np.divmod(np.arange(self.n_hedges), nx)
        jv, iv = np.divmod(np.arange(self.n_vedges), nx + 1)
        tail = np.concatenate([jh * (nx + 1) + ih, jv * (nx + 1) + iv])
        head = np.concatenate([jh * (nx + 1) + ih + 1, (jv + 1) * (nx + 1) + iv])
        return tail, head

    def vertex_positions(self) -> np.ndarray:
        """``(n_vertices, 2)`` array of vertex coordinates in flat-id order."""
        j, i = np.divmod(np.arange(self.n_vertices), self.nx + 1)
        return np.column_stack([self.origin[0] + self.h * i, self.origin[1] + self.h * j])


@dataclass(frozen=True)
class PixelSet:
    grid: Grid
    cells: tuple[int, ...] = ()

    def __post_init__(self):
        cells = tuple(sorted({int(c) for c in self.cells}))
        if cells and (cells[0] < 0 or cells[-1] >= self.grid.n_cells):
            raise IndexError("pixel set contains cells outside its grid")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_mask(cls, grid: Grid, mask) -> "PixelSet":
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (grid.ny, grid.nx):
            raise ValueError(f"mask shape {mask.shape} does not match grid ({grid.ny}, {grid.nx})")
        return cls(grid, tuple(np.flatnonzero(mask.ravel()).tolist()))

    @classmethod
    def from_ij(cls, grid: Grid, ij: Iterable[tuple[int, int]]) -> "PixelSet":
        return cls(grid, tuple(grid.cell_id(i, j) for i, j in ij))

    def mask(self) -> np.ndarray:
        m = np.zeros(self.grid.n_cells, dtype=bool)
        m[list(self.cells)] = True
        return m.reshape(self.grid.ny, self.grid.nx)

    def __len__(self):
        return len(self.cells)


@dataclass(frozen=True)
class OrientedLoop:
    """Closed simple lattice polygon; ``vertices`` lists each corner once (no repeat of the start)."""

    vertices: tuple[tuple[int, int], ...]
    h: float = 1.0

    def __post_init__(self):
        verts = tuple((int(i), int(j)) for i, j in self.vertices)
        n = len(verts)
        if n:
            if n < 4:
                raise ValueError("a non-degenerate lattice loop has at least 4 vertices")
            if len(set(verts)) != n:
                raise ValueError("loop is not simple (repeated vertex)")
            for a, b in zip(verts, verts[1:] + verts[:1]):
                if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                    raise ValueError(f"consecutive loop vertices {a}, {b} are not grid neighbours")
            k = verts.index(min(verts))
            verts = verts[k:] + verts[:k]
        object.__setattr__(self, "vertices", verts)

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    @property
    def length(self) -> float:
        return self.h * self.n_edges

    @cached_property
    def signed_area2(self) -> int:
        """Twice the shoelace area in cell units (exact integer)."""
        v = self.vertices
        return sum(a[0] * b[1] - b[0] * a[1] for a, b in zip(v, v[1:] + v[:1]))

    @property
    def signed_area(self) -> float:
        return 0.5 * self.signed_area2 * self.h * self.h

    @property
    def orientation(self) -> str:
        return "ccw" if self.signed_area2 > 0 else "cw"

    @classmethod
    def _trusted(cls, vertices: tuple, h: float) -> "OrientedLoop":
        # tracer output is simple and adjacent by construction; only canonicalise the start
        k = vertices.index(min(vertices))
        obj = object.__new__(cls)
        object.__setattr__(obj, "vertices", vertices[k:] + vertices[:k])
        object.__setattr__(obj, "h", h)
        return obj

    def reversed(self) -> "OrientedLoop":
        return OrientedLoop._trusted(self.vertices[::-1], self.h)

    def steps(self):
        v = self.vertices
        return zip(v, v[1:] + v[:1])

    def interior(self, grid: Grid) -> PixelSet:
        """Cells enclosed by the loop (even-odd rule on cell centres)."""
        mask = np.zeros((grid.ny, grid.nx), dtype=bool)
        # a horizontal ray from a cell centre crosses vertical edges only
        for a, b in self.steps():
            if a[0] == b[0]:
                i, j = a[0], min(a[1], b[1])
                if j < grid.ny:
                    mask[j, :i] ^= True
        return PixelSet.from_mask(grid, mask)


@dataclass(frozen=True)
class SegmentFamily:
    segments: tuple[tuple[tuple[float, float], tuple[float, float]], ...] = field(default=())

    def __post_init__(self):
        segs = tuple(((float(a[0]), float(a[1])), (float(b[0]), float(b[1]))) for a, b in self.segments)
        object.__setattr__(self, "segments", segs)


def _edge_counts(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signed boundary indicators: +1/-1 gives the direction keeping ``mask`` on the left."""
    p = np.pad(mask.astype(np.int8), 1)
    hdir = p[1:, 1:-1] - p[:-1, 1:-1]  # (ny+1, nx): above minus below
    vdir = p[1:-1, :-1] - p[1:-1, 1:]  # (ny, nx+1): left minus right
    return hdir, vdir


def boundary_edge_count(mask) -> int:
    hdir, vdir = _edge_counts(np.asarray(mask, dtype=bool))
    return int(np.count_nonzero(hdir) + np.count_nonzero(vdir))


def perimeter(P: PixelSet) -> float:
    return P.grid.h * boundary_edge_count(P.mask())


def pixel_components(P: PixelSet) -> list[PixelSet]:
    """4-connected components, largest first (ties broken by smallest cell id)."""
    labels, n = ndimage.label(P.mask())
    flat = labels.ravel()
    comps = [PixelSet(P.grid, tuple(np.flatnonzero(flat == k).tolist())) for k in range(1, n + 1)]
    comps.sort(key=lambda c: (-len(c), c.cells[0]))
    return comps


def _split_simple(walk: list[int]) -> list[list[int]]:
    """Split a closed vertex walk into simple cycles at repeated vertices."""
    out, stack, pos = [], [], {}
    for v in walk:
        if v in pos:
            k = pos[v]
            out.append(stack[k:])
            for u in stack[k + 1:]:
                del pos[u]
            del stack[k + 1:]
        else:
            pos[v] = len(stack)
            stack.append(v)
    if stack:
        out.append(stack)
    return out


def trace_loops(mask, h: float = 1.0) -> list[OrientedLoop]:
    """Trace the boundary of a cell mask into simple loops with the set on their left.

    At a vertex where two set cells touch diagonally the walk turns left, so it
    keeps hugging the cell it came along; any residual vertex repetition is
    split off into separate simple loops.
    """
    mask = np.asarray(mask, dtype=bool)
    ny, nx = mask.shape
    W = nx + 1
    hdir, vdir = _edge_counts(mask)
    out = bytearray(W * (ny + 1) * 4)
    jj, ii = np.nonzero(hdir > 0)
    for v in (jj * W + ii).tolist():
        out[4 * v + 0] = 1
    jj, ii = np.nonzero(hdir < 0)
    for v in (jj * W + ii + 1).tolist():
        out[4 * v + 2] = 1
    jj, ii = np.nonzero(vdir > 0)
    for v in (jj * W + ii).tolist():
        out[4 * v + 1] = 1
    jj, ii = np.nonzero(vdir < 0)
    for v in ((jj + 1) * W + ii).tolist():
        out[4 * v + 3] = 1

    step = (1, W, -1, -W)
    loops = []
    start = out.find(1)
    while start != -1:
        v, d = divmod(start, 4)
        walk = []
        while True:
            out[4 * v + d] = 0
            walk.append(v)
            v += step[d]
            for nd in ((d + 1) & 3, d, (d + 3) & 3):
                if out[4 * v + nd]:
                    d = nd
                    break
            else:
                break
        for cyc in _split_simple(walk):
            loops.append(OrientedLoop._trusted(tuple((u % W, u // W) for u in cyc), h))
        start = out.find(1, start)
    return loops


def _loop_order(loop: OrientedLoop):
    return (-abs(loop.signed_area2), loop.vertices[0])


def boundary_curves(P: PixelSet) -> tuple[list[OrientedLoop], list[OrientedLoop]]:
    """Split the boundary of ``P`` into counterclockwise outer loops and clockwise hole loops."""
    loops = trace_loops(P.mask(), P.grid.h)
    outer = sorted((lp for lp in loops if lp.signed_area2 > 0), key=_loop_order)
    holes = sorted((lp for lp in loops if lp.signed_area2 < 0), key=_loop_order)
    return outer, holes


def _point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.hypot(*(p - (a + t * ab))))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def segment_distance(s1, s2) -> float:
    (a, b), (c, d) = s1, s2
    d1, d2 = _cross(c, d, a), _cross(c, d, b)
    d3, d4 = _cross(a, b, c), _cross(a, b, d)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return 0.0
    return min(_point_segment_distance(a, c, d), _point_segment_distance(b, c, d),
               _point_segment_distance(c, a, b), _point_segment_distance(d, a, b))


def segment_separation_check(F: SegmentFamily, strict: bool = False) -> tuple[bool, list[bool]]:
    """For each segment, test dist(L_k, L_j) >= len(L_k) (``>`` if strict) against all others."""
    lengths = [math.dist(a, b) for a, b in F.segments]
    for k, ell in enumerate(lengths):
        if ell <= 0:
            raise ValueError(f"segment {k} has zero length")
    verdicts = []
    for k, sk in enumerate(F.segments):
        ok = True
        for j, sj in enumerate(F.segments):
            if j == k:
                continue
            dist = segment_distance(sk, sj)
            if (dist <= lengths[k]) if strict else (dist < lengths[k]):
                ok = False
                break
        verdicts.append(ok)
    return all(verdicts), verdicts


def loop_from_path(points: Sequence[tuple[int, int]], h: float = 1.0) -> OrientedLoop:
    pts = list(points)
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return OrientedLoop(tuple(pts), h)
