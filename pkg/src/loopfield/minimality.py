"""Silent magnetizations on a support graph and certificates of TV-minimality.

The silent edge measures on a support are exactly its cycle space.  A measure
``mu`` is TV-minimal among the measures with the same field iff no simple
oriented cycle ``C`` decreases the TV to first order, i.e. iff

    sum_{e in C, mu_e != 0} sign(mu_e) * C_e  +  len(C off the carrier)  >=  0

for every simple cycle in both orientations (conformal decomposition of
circulations makes simple cycles sufficient).  The sign-free version of this
test, ``len(C on carrier) <= len(C off carrier)``, is the classical geometric
sufficient condition and is reported alongside.
"""
from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.optimize import linprog

from .field import MeasurementSetup, Support, operator_matrix
from .grid import OrientedLoop
from .measures import EdgeMeasure, Magnetization, edge_measure_from_loop, tv_norm, variational_pairing

MAX_CYCLES = 1_000_000
MAX_ORACLE_DIM = 3


def support_graph(support: Support) -> nx.Graph:
    g = support.grid
    G = nx.Graph()
    for e in support.edges.tolist():
        a, b = g.edge_vertices(e)
        G.add_edge(a, b, eid=e)
    return G


def _loop_from_cycle(nodes, h) -> OrientedLoop:
    loop = OrientedLoop(tuple(nodes), h)
    return loop if loop.signed_area2 > 0 else loop.reversed()


def silent_loops(support: Support) -> list[OrientedLoop]:
    """Fundamental cycles of a spanning forest, each oriented counterclockwise."""
    G = support_graph(support)
    loops = [_loop_from_cycle(c, support.grid.h) for c in nx.cycle_basis(G)]
    loops.sort(key=lambda lp: (lp.vertices[0], lp.n_edges, lp.vertices))
    return loops


def silent_basis(support: Support) -> list[EdgeMeasure]:
    return [edge_measure_from_loop(support.grid, lp) for lp in silent_loops(support)]


def cycle_rank(support: Support) -> int:
    """``E - V + C`` of the support graph."""
    G = support_graph(support)
    return G.number_of_edges() - G.number_of_nodes() + nx.number_connected_components(G)


def treelike_check(support: Support) -> bool:
    return cycle_rank(support) == 0


@dataclass(frozen=True)
class KernelReport:
    nullity: int
    expected: int
    rank: int
    singular_values: np.ndarray
    threshold: float
    basis_residual: float
    sufficient: bool

    @property
    def verdict(self) -> str:
        return "S-sufficient (numerically)" if self.sufficient else "not S-sufficient"

    def to_dict(self):
        return {"nullity": self.nullity, "expected": self.expected, "rank": self.rank,
                "threshold": self.threshold, "basis_residual": self.basis_residual,
                "sufficient": self.sufficient, "verdict": self.verdict,
                "sigma_max": float(self.singular_values[0]) if self.singular_values.size else 0.0,
                "sigma_min_nonzero": float(self.singular_values[self.rank - 1]) if self.rank else 0.0}


def kernel_dimension_check(s: MeasurementSetup, support: Support, threshold: float = 1e-8) -> KernelReport:
    """Numerical nullity of the forward matrix compared with the cycle rank of the support."""
    A = operator_matrix(s, support)
    try:
        sigma = np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"SVD failed on the {A.shape} operator") from exc
    smax = float(sigma[0]) if sigma.size else 0.0
    rank = int(np.count_nonzero(sigma >= threshold * smax)) if smax > 0 else 0
    nullity = A.shape[1] - rank
    basis = silent_basis(support)
    resid = 0.0
    for nu in basis:
        x = support.vector(nu)
        resid = max(resid, float(np.linalg.norm(A @ x) / (max(smax, 1e-300) * np.linalg.norm(x))))
    expected = len(basis)
    return KernelReport(nullity, expected, rank, sigma, threshold, resid,
                        bool(nullity == expected and resid <= 1e-12))


@dataclass(frozen=True)
class MinimalityVerdict:
    """Outcome of :func:`certify_tv_minimal`.

    ``status`` is one of ``strict``, ``minimal``, ``undetermined`` or
    ``violated``; ``cycle`` is a descent cycle when violated, oriented so that
    adding a small positive multiple of it lowers the TV.  ``geometric`` is the
    sign-free carrier test: ``strict``, ``holds`` or ``fails``.
    """

    status: str
    cycle: OrientedLoop | None
    margin: int
    geometric: str
    geometric_margin: int
    cycles_checked: int
    exhaustive: bool

    def to_dict(self):
        return {"status": self.status, "margin": self.margin, "geometric": self.geometric,
                "geometric_margin": self.geometric_margin, "cycles_checked": self.cycles_checked,
                "exhaustive": self.exhaustive,
                "cycle": None if self.cycle is None else [list(v) for v in self.cycle.vertices]}


def _edge_part(mu) -> EdgeMeasure:
    if isinstance(mu, Magnetization):
        return mu.edge_part
    if isinstance(mu, EdgeMeasure):
        return mu
    raise TypeError(f"expected an edge measure or magnetization, got {type(mu).__name__}")


class _CycleScorer:
    def __init__(self, mu: EdgeMeasure, support: Support):
        outside = np.setdiff1d(mu.support, support.edges)
        if outside.size:
            raise ValueError(f"measure charges edges outside the support, e.g. {mu.grid.edge_key(outside[0])}")
        self.grid = mu.grid
        self.sign = np.sign(mu.weights).astype(np.int64)

    def score(self, nodes):
        """Signed carrier sum, carrier count and off-carrier count of the closed walk ``nodes``."""
        ids, steps = self.grid.loop_edges(nodes)
        eps = self.sign[ids]
        on = eps != 0
        return int(np.dot(eps[on], steps[on])), int(on.sum()), int((~on).sum())


def _even_subgraph_cycles(edges_nodes):
    H = nx.Graph()
    H.add_edges_from(edges_nodes)
    while H.number_of_edges():
        cyc = nx.find_cycle(H)
        H.remove_edges_from(cyc)
        H.remove_nodes_from([n for n in list(H.nodes) if H.degree(n) == 0])
        yield [a for a, _ in cyc]


def _sampled_cycles(support: Support, samples: int, seed: int):
    G = support_graph(support)
    basis = nx.cycle_basis(G)
    yield from basis
    if not basis:
        return
    rng = np.random.default_rng(seed)
    sets = [{frozenset(p) for p in zip(c, c[1:] + c[:1])} for c in basis]
    for _ in range(samples):
        pick = rng.random(len(sets)) < 0.5
        acc = set()
        for use, s_ in zip(pick, sets):
            if use:
                acc ^= s_
        if acc:
            yield from _even_subgraph_cycles([tuple(p) for p in acc])


def certify_tv_minimal(mu, support: Support, mode: str = "exhaustive", samples: int = 500,
                       seed: int = 0, max_cycles: int = MAX_CYCLES) -> MinimalityVerdict:
    """Check the cycle conditions for TV-minimality of ``mu`` on ``support``.

    Dipole atoms are ignored: they sit on a finite set that no cycle charges.
    ``exhaustive`` enumerates every simple cycle (guarded by ``max_cycles``);
    ``sampled`` checks fundamental cycles and random cycle-space elements and
    can only conclude ``violated`` or ``undetermined``.
    """
    if mode not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    edge = _edge_part(mu)
    scorer = _CycleScorer(edge, support)
    if mode == "exhaustive":
        cycles = nx.simple_cycles(support_graph(support))
    else:
        cycles = _sampled_cycles(support, samples, seed)
    worst, worst_nodes, worst_S = None, None, 0
    gworst = None
    n = 0
    for nodes in cycles:
        n += 1
        if mode == "exhaustive" and n > max_cycles:
            raise RuntimeError(f"more than {max_cycles} simple cycles; use mode='sampled'")
        S, on, off = scorer.score(nodes)
        margin = off - abs(S)
        if worst is None or margin < worst:
            worst, worst_nodes, worst_S = margin, nodes, S
        gm = off - on
        gworst = gm if gworst is None else min(gworst, gm)
    if worst is None:
        worst, gworst = 0, 0
        status = "strict" if mode == "exhaustive" else "undetermined"
        return MinimalityVerdict(status, None, 0, "strict", 0, 0, mode == "exhaustive")
    geometric = "strict" if gworst > 0 else ("holds" if gworst == 0 else "fails")
    cycle = None
    if worst < 0:
        status = "violated"
        loop = OrientedLoop(tuple(worst_nodes), support.grid.h)
        # orient against the carrier signs: the walk's own orientation has signed sum worst_S
        cycle = loop.reversed() if worst_S > 0 else loop
    elif mode == "sampled":
        status = "undetermined"
    else:
        status = "strict" if worst > 0 else "minimal"
    return MinimalityVerdict(status, cycle, worst, geometric, gworst, n, mode == "exhaustive")


def ep1_condition(carrier_edges, support: Support, strict: bool = False) -> bool:
    """Sign-free carrier test over all simple cycles: on-carrier length <= (or <) off-carrier length."""
    carrier = set(int(e) for e in carrier_edges)
    g = support.grid
    for nodes in nx.simple_cycles(support_graph(support)):
        ids, _ = g.loop_edges(nodes)
        on = sum(1 for e in ids.tolist() if e in carrier)
        off = len(ids) - on
        if on > off or (strict and on == off):
            return False
    return True


@dataclass(frozen=True)
class OracleResult:
    min_tv: float
    tv_start: float
    coefficients: np.ndarray
    ranges: np.ndarray
    unique: bool
    grid_min_tv: float
    basis: tuple[EdgeMeasure, ...]

    def minimizer(self, mu0: EdgeMeasure) -> EdgeMeasure:
        out = mu0
        for c, b in zip(self.coefficients, self.basis):
            out = out + b * (c / b.grid.h)
        return out

    def endpoints(self, mu0: EdgeMeasure):
        """For a one-dimensional cycle space: the two ends of the minimizing segment."""
        if len(self.basis) != 1:
            raise ValueError("segment endpoints only defined for a one-dimensional cycle space")
        b = self.basis[0] * (1.0 / self.basis[0].grid.h)
        lo, hi = self.ranges[0]
        return mu0 + b * lo, mu0 + b * hi

    @property
    def description(self) -> str:
        if self.unique:
            return "single point"
        free = int(np.count_nonzero(self.ranges[:, 1] - self.ranges[:, 0] > 0))
        return "interval" if free == 1 else f"face (free in {free} coordinates)"


def ep1_oracle(mu0, support: Support, resolution: int = 41) -> OracleResult:
    """Brute-force TV minimisation over the (at most 3-dimensional) cycle space.

    A coefficient grid over ``[-TV, TV]^d`` locates the basin; a linear program
    then pins the exact minimum and the extent of the minimizing set along
    each basis direction.  Dipoles are outside the cycle space and only add
    their fixed TV.
    """
    extra = tv_norm(mu0) - tv_norm(_edge_part(mu0))
    mu0 = _edge_part(mu0)
    basis = tuple(silent_basis(support))
    d = len(basis)
    if d > MAX_ORACLE_DIM:
        raise ValueError(f"cycle space has dimension {d} > {MAX_ORACLE_DIM}; brute force oracle refused")
    h = support.grid.h
    x0 = mu0.weights[support.edges]
    tv0 = float(np.abs(x0).sum())
    if d == 0:
        return OracleResult(tv0 + extra, tv0 + extra, np.zeros(0), np.zeros((0, 2)), True, tv0 + extra, basis)
    B = np.column_stack([b.weights[support.edges] / h for b in basis])
    span = max(tv0, 1.0)
    axis = np.linspace(-span, span, resolution)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    vals = np.abs(x0[None, :] + mesh @ B.T).sum(axis=1)
    k = int(np.argmin(vals))
    grid_min = float(vals[k])

    # LP in (c, t): minimise sum t subject to -t <= x0 + B c <= t
    n = len(x0)
    cost = np.concatenate([np.zeros(d), np.ones(n)])
    A_ub = np.block([[B, -np.eye(n)], [-B, -np.eye(n)]])
    b_ub = np.concatenate([-x0, x0])
    bounds = [(None, None)] * d + [(0, None)] * n
    lp = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if lp.status != 0:
        raise RuntimeError(f"oracle LP failed: {lp.message}")
    best = min(float(lp.fun), grid_min)
    c_best = lp.x[:d] if float(lp.fun) <= grid_min else mesh[k]

    slack = 1e-9 * max(1.0, tv0)
    A_face = np.vstack([A_ub, cost])
    b_face = np.concatenate([b_ub, [best + slack]])
    ranges = np.zeros((d, 2))
    for i in range(d):
        for side, sgn in ((0, 1.0), (1, -1.0)):
            obj = np.zeros(d + n)
            obj[i] = sgn
            r = linprog(obj, A_ub=A_face, b_ub=b_face, bounds=bounds, method="highs")
            ranges[i, side] = r.x[i] if r.status == 0 else c_best[i]
    ranges = np.where(np.abs(ranges - c_best[:, None]) <= 1e-7 * span, c_best[:, None], ranges)
    unique = bool(np.all(ranges[:, 1] - ranges[:, 0] <= 1e-6 * span))
    return OracleResult(best + extra, tv0 + extra, np.asarray(c_best), ranges, unique, grid_min + extra, basis)


@dataclass(frozen=True)
class VariationalReport:
    min_pairing: float
    witness: EdgeMeasure | None
    evaluated: int
    not_minimal: bool

    def to_dict(self):
        return {"min_pairing": self.min_pairing, "evaluated": self.evaluated, "not_minimal": self.not_minimal}


def variational_certify(mu, support: Support, samples: int = 200, seed: int = 0) -> VariationalReport:
    """Minimum of the variational pairing over ``±`` basis loops and random unit-TV cycle combinations."""
    basis = silent_basis(support)
    cands = [s * b for b in basis for s in (1.0, -1.0)]
    rng = np.random.default_rng(seed)
    if basis:
        W = np.column_stack([b.weights for b in basis])
        for _ in range(samples):
            w = W @ rng.standard_normal(len(basis))
            tv = np.abs(w).sum()
            if tv > 0:
                cands.append(EdgeMeasure(support.grid, w / tv))
    best, witness = None, None
    for nu in cands:
        p = variational_pairing(mu, nu) / tv_norm(nu)
        if best is None or p < best:
            best, witness = p, nu
    if best is None:
        return VariationalReport(0.0, None, 0, False)
    return VariationalReport(best, witness, len(cands), bool(best < -1e-12))
