"""Stream functions, suplevel sets, co-area profiles and loop decompositions.

A divergence-free edge measure on a pixel grid is the rotated gradient of a
piecewise-constant cell function.  Slicing that function at its jump values
turns the measure into a finite, exactly weighted family of simple loops.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, OrientedLoop, PixelSet, boundary_curves, boundary_edge_count, trace_loops
from .measures import EdgeMeasure, check_divergence_free, edge_measure_from_loop, tv_norm


@dataclass(frozen=True, eq=False)
class CellFunction:
    """Scalar per cell, stored ``(ny, nx)``; zero outside the grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.ny, self.grid.nx):
            raise ValueError(f"cell values must have shape ({self.grid.ny}, {self.grid.nx}), got {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        if not isinstance(other, CellFunction):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def levels(self) -> np.ndarray:
        """Sorted distinct values, always including the exterior value 0."""
        return np.union1d(np.unique(self.values), [0.0])


@dataclass(frozen=True)
class Level:
    t_lo: float
    t_hi: float
    loops: tuple[OrientedLoop, ...]

    @property
    def thickness(self) -> float:
        return self.t_hi - self.t_lo

    @property
    def masses(self) -> tuple[float, ...]:
        return tuple(self.thickness * lp.length for lp in self.loops)


@dataclass(frozen=True)
class LoopDecomposition:
    grid: Grid
    levels: tuple[Level, ...] = ()

    def loops(self):
        for lev in self.levels:
            for lp in lev.loops:
                yield lev, lp

    @property
    def total_mass(self) -> float:
        return float(sum(sum(lev.masses) for lev in self.levels))


def rotated_gradient(phi: CellFunction) -> EdgeMeasure:
    """Edge measure circulating counterclockwise around the suplevel sets of ``phi``."""
    g = phi.grid
    p = np.pad(phi.values, 1)
    wh = g.h * (p[1:, 1:-1] - p[:-1, 1:-1])  # above minus below
    wv = g.h * (p[1:-1, :-1] - p[1:-1, 1:])  # left minus right
    return EdgeMeasure(g, np.concatenate([wh.ravel(), wv.ravel()]))


def stream_function(nu: EdgeMeasure) -> CellFunction:
    """Invert :func:`rotated_gradient`, normalised to vanish on the unbounded face."""
    check_divergence_free(nu)
    g = nu.grid
    wh = nu.weights[: g.n_hedges].reshape(g.ny + 1, g.nx)
    return CellFunction(g, np.cumsum(wh[:-1] / g.h, axis=0))


def suplevel_set(phi: CellFunction, t: float) -> PixelSet:
    return PixelSet.from_mask(phi.grid, phi.values > t)


def _level_mask(phi: CellFunction, t_lo: float):
    """Mask to trace for the slab (t_lo, t_hi) and whether its loops must be reversed.

    For negative levels the suplevel set contains the unbounded face, so its
    bounded complement is traced instead and the orientation flipped.
    """
    if t_lo >= 0:
        return phi.values > t_lo, False
    return phi.values <= t_lo, True


def coarea_profile(phi: CellFunction) -> list[tuple[tuple[float, float], float]]:
    vals = phi.levels()
    out = []
    for a, b in zip(vals[:-1], vals[1:]):
        mask, _ = _level_mask(phi, a)
        out.append(((float(a), float(b)), phi.grid.h * boundary_edge_count(mask)))
    return out


def coarea_checksum(profile) -> float:
    return float(sum((b - a) * per for (a, b), per in profile))


def _canonical_loops(loops):
    # level order: counterclockwise first, then larger enclosed area, then smallest vertex
    return tuple(sorted(loops, key=lambda lp: (lp.signed_area2 < 0, -abs(lp.signed_area2), lp.vertices[0])))


def decompose_function(phi: CellFunction) -> LoopDecomposition:
    vals = phi.levels()
    levels = []
    for a, b in zip(vals[:-1], vals[1:]):
        mask, flip = _level_mask(phi, a)
        loops = trace_loops(mask, phi.grid.h)
        if flip:
            loops = [lp.reversed() for lp in loops]
        if loops:
            levels.append(Level(float(a), float(b), _canonical_loops(loops)))
    return LoopDecomposition(phi.grid, tuple(levels))


def decompose(nu: EdgeMeasure) -> LoopDecomposition:
    return decompose_function(stream_function(nu))


def _loop_steps(d: LoopDecomposition):
    """All loop steps of ``d`` at once: edge ids, signs and the thickness of their slab."""
    verts, nxt, thick = [], [], []
    for lev in d.levels:
        for lp in lev.loops:
            n = lp.n_edges
            if n == 0:
                continue
            verts.extend(lp.vertices)
            nxt.extend(lp.vertices[1:])
            nxt.append(lp.vertices[0])
            thick.append(np.full(n, lev.thickness))
    if not verts:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    ids, signs = d.grid.step_edges(np.array(verts), np.array(nxt))
    return ids, signs, np.concatenate(thick)


def reconstruct(d: LoopDecomposition) -> EdgeMeasure:
    g = d.grid
    ids, signs, thick = _loop_steps(d)
    w = np.zeros(g.n_edges)
    np.add.at(w, ids, signs * thick * g.h)
    return EdgeMeasure(g, w)


@dataclass(frozen=True)
class LoopAtom:
    """One atom of the representing measure: the normalised loop tangent ``R_gamma / len``."""

    mass: float
    loop: OrientedLoop
    t_lo: float
    t_hi: float

    def measure(self, grid: Grid) -> EdgeMeasure:
        return edge_measure_from_loop(grid, self.loop, 1.0 / self.loop.length)


def representing_measure(d: LoopDecomposition) -> list[LoopAtom]:
    atoms = []
    for lev in d.levels:
        for lp in lev.loops:
            if lp.n_edges == 0:
                continue
            atoms.append(LoopAtom(lev.thickness * lp.length, lp, lev.t_lo, lev.t_hi))
    return atoms


def edge_level_mass(d: LoopDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """Per edge: total slab thickness of loops through it, and traversal sign conflicts.

    Returns ``(mass, consistent)`` where ``consistent[e]`` is False when two
    loops cross edge ``e`` in opposite directions.
    """
    g = d.grid
    ids, signs, thick = _loop_steps(d)
    mass = np.zeros(g.n_edges)
    np.add.at(mass, ids, thick * g.h)
    pos = np.zeros(g.n_edges, dtype=bool)
    neg = np.zeros(g.n_edges, dtype=bool)
    pos[ids[signs > 0]] = True
    neg[ids[signs < 0]] = True
    return mass, ~(pos & neg)


def boundary_reconstruction(P: PixelSet) -> EdgeMeasure:
    """Sum of the traced boundary loops of ``P``; equals the rotated gradient of its indicator."""
    outer, holes = boundary_curves(P)
    g = P.grid
    total = EdgeMeasure(g)
    for lp in outer + holes:
        total = total + edge_measure_from_loop(g, lp)
    return total


def indicator(P: PixelSet) -> CellFunction:
    return CellFunction(P.grid, P.mask().astype(float))


def mass_checksum(d: LoopDecomposition, nu: EdgeMeasure) -> float:
    return abs(d.total_mass - tv_norm(nu))
