"""Discrete planar vector measures: edge-supported measures and point dipoles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, OrientedLoop


class DivergenceError(ValueError):
    """Raised when a measure that must be divergence-free is not."""

    def __init__(self, vertex, value):
        self.vertex = tuple(vertex)
        self.value = float(value)
        super().__init__(f"nonzero divergence {self.value:g} at vertex {self.vertex}")


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class EdgeMeasure:
    """Tangential measure on grid edges.

    ``weights[e]`` is the full mass carried by edge ``e`` (density times ``h``),
    signed along the edge's canonical +x / +y direction.
    """

    __slots__ = ("grid", "weights")

    def __init__(self, grid: Grid, weights=None):
        self.grid = grid
        if weights is None:
            weights = np.zeros(grid.n_edges)
        weights = _frozen(weights)
        if weights.shape != (grid.n_edges,):
            raise ValueError(f"expected {grid.n_edges} edge weights, got shape {weights.shape}")
        self.weights = weights

    @classmethod
    def from_edges(cls, grid: Grid, items) -> "EdgeMeasure":
        """Build from ``(kind, i, j, w)`` tuples; repeated edges accumulate."""
        w = np.zeros(grid.n_edges)
        for kind, i, j, val in items:
            w[grid.edge_id(kind, i, j)] += val
        return cls(grid, w)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights)

    def _check(self, other):
        if not isinstance(other, EdgeMeasure):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("edge measures live on different grids")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return EdgeMeasure(self.grid, self.weights + other.weights)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return EdgeMeasure(self.grid, self.weights - other.weights)

    def __mul__(self, c):
        return EdgeMeasure(self.grid, float(c) * self.weights)

    __rmul__ = __mul__

    def __neg__(self):
        return EdgeMeasure(self.grid, -self.weights)

    def __eq__(self, other):
        if not isinstance(other, EdgeMeasure):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.weights, other.weights)

    def __repr__(self):
        return f"EdgeMeasure({self.grid}, nnz={self.support.size}, tv={tv_norm(self):g})"


@dataclass(frozen=True, eq=False)
class DipoleField:
    """Finitely many point dipoles in the plane with 3-D moments."""

    positions: np.ndarray
    moments: np.ndarray

    def __post_init__(self):
        pos = _frozen(np.reshape(self.positions, (-1, 2)))
        mom = _frozen(np.reshape(self.moments, (-1, 3)))
        if len(pos) != len(mom):
            raise ValueError("positions and moments differ in length")
        if len({tuple(p) for p in pos.tolist()}) != len(pos):
            raise ValueError("dipole positions must be pairwise distinct")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "moments", mom)

    @classmethod
    def empty(cls) -> "DipoleField":
        return cls(np.zeros((0, 2)), np.zeros((0, 3)))

    def __len__(self):
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class Magnetization:
    edge_part: EdgeMeasure
    dipole_part: DipoleField = None

    def __post_init__(self):
        if self.dipole_part is None:
            object.__setattr__(self, "dipole_part", DipoleField.empty())

    @property
    def grid(self) -> Grid:
        return self.edge_part.grid


@dataclass(frozen=True, eq=False)
class VertexFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    def nonzero_vertices(self, atol: float = 0.0) -> list[tuple[int, int]]:
        return [self.grid.vertex_ij(v) for v in np.flatnonzero(np.abs(self.values) > atol)]


def edge_measure_from_loop(grid: Grid, loop: OrientedLoop, weight: float = 1.0) -> EdgeMeasure:
    """``weight`` times the unit-speed tangent measure of ``loop``."""
    w = np.zeros(grid.n_edges)
    add_loop(w, grid, loop, weight)
    return EdgeMeasure(grid, w)


def add_loop(w: np.ndarray, grid: Grid, loop: OrientedLoop, weight: float) -> None:
    """Accumulate ``weight * R_loop`` into the raw weight array ``w`` in place."""
    if loop.n_edges == 0:
        return
    ids, signs = grid.loop_edges(loop.vertices)
    np.add.at(w, ids, signs * (weight * grid.h))


def edge_measure_from_path(grid: Grid, path, weight: float = 1.0) -> EdgeMeasure:
    """Tangent measure of an open lattice polyline (retraced edges cancel)."""
    w = np.zeros(grid.n_edges)
    for a, b in zip(path, path[1:]):
        e, sign = grid.edge_between(tuple(a), tuple(b))
        w[e] += sign * weight * grid.h
    return EdgeMeasure(grid, w)


def tv_norm(m) -> float:
    if isinstance(m, EdgeMeasure):
        return float(np.abs(m.weights).sum())
    if isinstance(m, DipoleField):
        return float(np.linalg.norm(m.moments, axis=1).sum())
    if isinstance(m, Magnetization):
        return tv_norm(m.edge_part) + tv_norm(m.dipole_part)
    raise TypeError(f"no total variation defined for {type(m).__name__}")


def divergence(m: EdgeMeasure) -> VertexFunction:
    """Outflow at each vertex: +w at an edge's tail, -w at its head."""
    tail, head = m.grid.edge_endpoint_ids()
    div = np.zeros(m.grid.n_vertices)
    np.add.at(div, tail, m.weights)
    np.add.at(div, head, -m.weights)
    return VertexFunction(m.grid, div)


def divergence_tolerance(m: EdgeMeasure) -> float:
    scale = float(np.abs(m.weights).max()) if m.weights.size else 0.0
    return 1e-12 * scale


def check_divergence_free(m: EdgeMeasure, atol: float | None = None) -> None:
    div = divergence(m).values
    atol = divergence_tolerance(m) if atol is None else atol
    bad = np.flatnonzero(np.abs(div) > atol)
    if bad.size:
        v = bad[np.argmax(np.abs(div[bad]))]
        raise DivergenceError(m.grid.vertex_ij(int(v)), div[v])


def unit_direction(m: EdgeMeasure) -> np.ndarray:
    return np.sign(m.weights)


def _edge_weights(mu) -> np.ndarray:
    if isinstance(mu, Magnetization):
        return mu.edge_part.weights
    if isinstance(mu, EdgeMeasure):
        return mu.weights
    if isinstance(mu, DipoleField):
        return None
    raise TypeError(f"unsupported measure type {type(mu).__name__}")


def w_field(mu, nu: EdgeMeasure) -> np.ndarray:
    """Sign field used in the variational test, defined on the support of ``nu``.

    Follows ``mu``'s edge sign where it is nonzero and ``nu``'s own sign
    elsewhere; dipole atoms carry no mass on edges and never contribute.
    """
    mw = _edge_weights(mu)
    s_nu = np.sign(nu.weights)
    if mw is None:
        return s_nu
    return np.where(mw != 0, np.sign(mw), s_nu) * (nu.weights != 0)


def variational_pairing(mu, nu: EdgeMeasure) -> float:
    check_divergence_free(nu)
    return float(np.dot(w_field(mu, nu), nu.weights))
