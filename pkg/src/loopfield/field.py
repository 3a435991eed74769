"""Forward field operator for planar magnetizations and its adjoint.

Edge contributions use the closed-form antiderivative of the kernel along each
segment, so the reading of a measure only depends on its vertex divergence and
every closed loop is exactly silent.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Grid
from .measures import DipoleField, EdgeMeasure, Magnetization, divergence

MAX_MATRIX_DIM = 10_000


@dataclass(frozen=True, eq=False)
class MeasurementSetup:
    points: np.ndarray
    v: np.ndarray = (0.0, 0.0, 1.0)
    weights: np.ndarray = None
    mu0: float = 1.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        v = np.array(self.v, dtype=float).reshape(3)
        if not math.isclose(float(np.linalg.norm(v)), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"sensor direction must be a unit vector, |v| = {np.linalg.norm(v)}")
        if len(pts) == 0:
            raise ValueError("measurement setup has no points")
        if np.min(np.abs(pts[:, 2])) <= 0:
            raise ValueError("measurement points must lie off the source plane")
        w = np.full(len(pts), 1.0 / len(pts)) if self.weights is None else np.array(self.weights, dtype=float)
        if w.shape != (len(pts),) or np.any(w <= 0):
            raise ValueError("quadrature weights must be positive, one per point")
        for a in (pts, v, w):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mu0", float(self.mu0))

    def __len__(self):
        return len(self.points)

    def inner(self, a, b) -> float:
        """Quadrature inner product on the measurement set."""
        return float(np.dot(self.weights * np.asarray(a), np.asarray(b)))

    def norm(self, a) -> float:
        return math.sqrt(self.inner(a, a))


def plane_setup(xs, ys, z: float, v=(0.0, 0.0, 1.0), area: float | None = None, mu0: float = 1.0) -> MeasurementSetup:
    """Tensor grid of sensors at height ``z``; uniform weights summing to ``area``."""
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, float(z))])
    if area is None:
        area = (np.ptp(xs) or 1.0) * (np.ptp(ys) or 1.0)
    return MeasurementSetup(pts, v, np.full(len(pts), area / len(pts)), mu0)


@dataclass(frozen=True, eq=False)
class Reading:
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __add__(self, other):
        return Reading(self.values + other.values)


@dataclass(frozen=True, eq=False)
class Support:
    """Unknowns of an inversion: a set of grid edges plus optional dipole sites."""

    grid: Grid
    edges: np.ndarray
    dipole_sites: np.ndarray = None

    def __post_init__(self):
        edges = np.unique(np.asarray(self.edges, dtype=np.int64).reshape(-1))
        if edges.size and (edges[0] < 0 or edges[-1] >= self.grid.n_edges):
            raise IndexError("support edge outside the grid")
        sites = np.zeros((0, 2)) if self.dipole_sites is None else np.array(self.dipole_sites, float).reshape(-1, 2)
        for a in (edges, sites):
            a.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "dipole_sites", sites)

    @classmethod
    def full(cls, grid: Grid, dipole_sites=None) -> "Support":
        return cls(grid, np.arange(grid.n_edges), dipole_sites)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_sites(self) -> int:
        return len(self.dipole_sites)

    @property
    def n_unknowns(self) -> int:
        return self.n_edges + 3 * self.n_sites

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[: self.n_edges], x[self.n_edges:].reshape(-1, 3)

    def magnetization(self, x) -> Magnetization:
        we, mom = self.split(x)
        w = np.zeros(self.grid.n_edges)
        w[self.edges] = we
        keep = np.any(mom != 0, axis=1)
        return Magnetization(EdgeMeasure(self.grid, w), DipoleField(self.dipole_sites[keep], mom[keep]))

    def vector(self, mu) -> np.ndarray:
        """Coordinates of ``mu`` (EdgeMeasure or Magnetization) in this support; raises if it does not fit."""
        if isinstance(mu, EdgeMeasure):
            mu = Magnetization(mu)
        w = mu.edge_part.weights
        outside = np.setdiff1d(np.flatnonzero(w), self.edges)
        if outside.size:
            raise ValueError(f"measure charges edges outside the support, e.g. {self.grid.edge_key(outside[0])}")
        mom = np.zeros((self.n_sites, 3))
        for p, m in zip(mu.dipole_part.positions, mu.dipole_part.moments):
            hit = np.flatnonzero(np.all(self.dipole_sites == p, axis=1))
            if hit.size == 0:
                raise ValueError(f"dipole at {tuple(p)} is not a support site")
            mom[hit[0]] += m
        return np.concatenate([w[self.edges], mom.ravel()])


def kernel_Kv(x, v) -> np.ndarray:
    """Gradient of ``v.x / |x|^3``; ``x`` may carry leading batch axes."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    if np.any(r2 == 0):
        raise ValueError("kernel is singular at x = 0")
    r = np.sqrt(r2)
    return v / (r2 * r) - 3.0 * x * (x @ v)[..., None] / (r2 * r2 * r)


def _F(z, v) -> np.ndarray:
    """Antiderivative ``v.z / |z|^3`` of the kernel along a segment."""
    r2 = np.sum(z * z, axis=-1)
    return (z @ v) / (r2 * np.sqrt(r2))


def _vertex_potential_matrix(s: MeasurementSetup, grid: Grid, vertex_ids) -> np.ndarray:
    xy = grid.vertex_positions()[np.asarray(vertex_ids, dtype=np.int64)]
    src = np.column_stack([xy, np.zeros(len(xy))])
    return _F(s.points[:, None, :] - src[None, :, :], s.v)


def forward_edges(m: EdgeMeasure, s: MeasurementSetup) -> Reading:
    """Field of an edge measure, summed vertex by vertex through its divergence."""
    g = m.grid
    div = divergence(m).values
    nz = np.flatnonzero(div)
    if nz.size == 0:
        return Reading(np.zeros(len(s)))
    F = _vertex_potential_matrix(s, g, nz)
    return Reading(-(s.mu0 / (4 * math.pi * g.h)) * (F @ div[nz]))


def forward_dipoles(D: DipoleField, s: MeasurementSetup) -> Reading:
    if len(D) == 0:
        return Reading(np.zeros(len(s)))
    src = np.column_stack([D.positions, np.zeros(len(D))])
    diff = s.points[:, None, :] - src[None, :, :]
    if np.any(np.all(diff == 0, axis=-1)):
        raise ValueError("a dipole coincides with a measurement point")
    K = kernel_Kv(diff, s.v)
    return Reading(-(s.mu0 / (4 * math.pi)) * np.einsum("qak,ak->q", K, D.moments))


def forward(mu, s: MeasurementSetup) -> Reading:
    if isinstance(mu, EdgeMeasure):
        return forward_edges(mu, s)
    if isinstance(mu, DipoleField):
        return forward_dipoles(mu, s)
    return forward_edges(mu.edge_part, s) + forward_dipoles(mu.dipole_part, s)


def edge_columns(s: MeasurementSetup, grid: Grid, edges) -> np.ndarray:
    """Unweighted response of unit-mass edges: ``-(mu0 / 4 pi h) (F(x - tail) - F(x - head))``."""
    edges = np.asarray(edges, dtype=np.int64)
    tail, head = grid.edge_endpoint_ids()
    verts, inv = np.unique(np.concatenate([tail[edges], head[edges]]), return_inverse=True)
    F = _vertex_potential_matrix(s, grid, verts)
    n = len(edges)
    return -(s.mu0 / (4 * math.pi * grid.h)) * (F[:, inv[:n]] - F[:, inv[n:]])


def dipole_columns(s: MeasurementSetup, sites) -> np.ndarray:
    """Unweighted response of unit moments; columns ordered (site, component)."""
    sites = np.asarray(sites, dtype=float).reshape(-1, 2)
    src = np.column_stack([sites, np.zeros(len(sites))])
    K = kernel_Kv(s.points[:, None, :] - src[None, :, :], s.v)
    return -(s.mu0 / (4 * math.pi)) * K.reshape(len(s), -1)


def response_matrix(s: MeasurementSetup, support: Support) -> np.ndarray:
    """Plain forward matrix ``G`` with ``reading = G @ x`` (no quadrature weighting)."""
    rows, cols = len(s), support.n_unknowns
    if rows > MAX_MATRIX_DIM or cols > MAX_MATRIX_DIM:
        raise ValueError(f"{rows}x{cols} operator exceeds the dense size guard ({MAX_MATRIX_DIM})")
    blocks = [edge_columns(s, support.grid, support.edges)]
    if support.n_sites:
        blocks.append(dipole_columns(s, support.dipole_sites))
    return np.hstack(blocks)


def operator_matrix(s: MeasurementSetup, support: Support) -> np.ndarray:
    """Forward matrix with rows scaled by ``sqrt(weights)``: Euclidean norms become weighted norms."""
    return np.sqrt(s.weights)[:, None] * response_matrix(s, support)


def adjoint(psi, s: MeasurementSetup, support: Support, G: np.ndarray | None = None):
    """Transpose of the forward map under the weighted pairing.

    Returns ``(edge_values, dipole_values)`` with shapes ``(n_edges,)`` and
    ``(n_sites, 3)``.
    """
    psi = psi.values if isinstance(psi, Reading) else np.asarray(psi, dtype=float)
    if G is None:
        G = response_matrix(s, support)
    return support.split(G.T @ (s.weights * psi))


def scalar_potential(D: DipoleField, x) -> float:
    x = np.asarray(x, dtype=float).reshape(3)
    if len(D) == 0:
        return 0.0
    src = np.column_stack([D.positions, np.zeros(len(D))])
    diff = x - src
    r = np.linalg.norm(diff, axis=1)
    if np.any(r == 0):
        raise ValueError("potential is singular at a dipole position")
    return float(np.sum(np.einsum("ak,ak->a", diff, D.moments) / r**3) / (4 * math.pi))


def export_matrix(path, A: np.ndarray, support: Support) -> None:
    """Write ``A`` column-major as float64 plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    np.asarray(A, dtype="<f8").ravel(order="F").tofile(path)
    sidecar = {
        "rows": int(A.shape[0]),
        "cols": int(A.shape[1]),
        "edge_index": [list(support.grid.edge_key(e)) for e in support.edges],
        "dipole_sites": support.dipole_sites.tolist(),
    }
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=1))


def import_matrix(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    data = np.fromfile(path, dtype="<f8")
    return data.reshape((meta["rows"], meta["cols"]), order="F"), meta
