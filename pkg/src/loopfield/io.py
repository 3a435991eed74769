"""JSON encodings of every domain type, plus CSV export of lambda-path rows.

Documents are plain dicts.  :func:`dumps` sorts keys and relies on Python's
shortest round-trip float repr, so equal inputs always serialise to equal
bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .field import MeasurementSetup, Reading, Support
from .grid import Grid, OrientedLoop, PixelSet
from .inversion import CertReport, Solution, SolveOptions
from .loops import CellFunction, Level, LoopDecomposition
from .measures import DipoleField, EdgeMeasure, Magnetization


class SchemaError(ValueError):
    """A document does not match the expected encoding."""


def _num(x):
    x = float(x)
    return 0.0 if x == 0 else x  # avoid "-0.0" in output


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc


def _need(doc, *keys):
    if not isinstance(doc, dict):
        raise SchemaError(f"expected an object, got {type(doc).__name__}")
    missing = [k for k in keys if k not in doc]
    if missing:
        raise SchemaError(f"missing field(s) {', '.join(missing)}")


# --- geometry -------------------------------------------------------------

def grid_to_json(g: Grid):
    return {"nx": g.nx, "ny": g.ny, "h": _num(g.h), "origin": [_num(g.origin[0]), _num(g.origin[1])]}


def grid_from_json(doc) -> Grid:
    _need(doc, "nx", "ny", "h")
    return Grid(int(doc["nx"]), int(doc["ny"]), float(doc["h"]), tuple(float(c) for c in doc.get("origin", (0, 0))))


def pixelset_to_json(P: PixelSet):
    return {"grid": grid_to_json(P.grid), "cells": list(P.cells)}


def pixelset_from_json(doc) -> PixelSet:
    _need(doc, "grid", "cells")
    return PixelSet(grid_from_json(doc["grid"]), tuple(int(c) for c in doc["cells"]))


def loop_to_json(lp: OrientedLoop):
    return {"vertices": [list(v) for v in lp.vertices], "orientation": lp.orientation}


def loop_from_json(doc, h: float = 1.0) -> OrientedLoop:
    _need(doc, "vertices")
    lp = OrientedLoop(tuple(tuple(v) for v in doc["vertices"]), h)
    if "orientation" in doc and doc["orientation"] != lp.orientation:
        raise SchemaError(f"loop declared {doc['orientation']} but its vertices run {lp.orientation}")
    return lp


# --- measures -------------------------------------------------------------

def _edges_to_json(m: EdgeMeasure):
    out = []
    for e in m.support.tolist():
        kind, i, j = m.grid.edge_key(e)
        out.append({"kind": kind, "i": i, "j": j, "w": _num(m.weights[e])})
    return out


def edge_measure_to_json(m: EdgeMeasure):
    return {"grid": grid_to_json(m.grid), "edges": _edges_to_json(m)}


def edge_measure_from_json(doc) -> EdgeMeasure:
    _need(doc, "grid", "edges")
    g = grid_from_json(doc["grid"])
    try:
        return EdgeMeasure.from_edges(g, [(e["kind"], int(e["i"]), int(e["j"]), float(e["w"])) for e in doc["edges"]])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad edge entry: {exc}") from exc


def dipoles_to_json(D: DipoleField):
    return {"atoms": [{"x": _num(p[0]), "y": _num(p[1]), "m": [_num(c) for c in m]}
                      for p, m in zip(D.positions.tolist(), D.moments.tolist())]}


def dipoles_from_json(doc) -> DipoleField:
    _need(doc, "atoms")
    atoms = doc["atoms"]
    if not atoms:
        return DipoleField.empty()
    return DipoleField([[a["x"], a["y"]] for a in atoms], [a["m"] for a in atoms])


def magnetization_to_json(mu: Magnetization):
    doc = edge_measure_to_json(mu.edge_part)
    doc.update(dipoles_to_json(mu.dipole_part))
    return doc


def measure_from_json(doc):
    """Decode an edge measure, or a magnetization when the document carries ``atoms``."""
    em = edge_measure_from_json(doc)
    if "atoms" in doc:
        return Magnetization(em, dipoles_from_json(doc))
    return em


def measure_to_json(mu):
    if isinstance(mu, Magnetization):
        return magnetization_to_json(mu)
    return edge_measure_to_json(mu)


# --- loop decomposition ---------------------------------------------------

def cell_function_to_json(phi: CellFunction):
    cells = [{"i": int(i), "j": int(j), "v": _num(phi.values[j, i])}
             for j, i in zip(*np.nonzero(phi.values))]
    return {"grid": grid_to_json(phi.grid), "cells": cells}


def cell_function_from_json(doc) -> CellFunction:
    _need(doc, "grid", "cells")
    g = grid_from_json(doc["grid"])
    vals = np.zeros((g.ny, g.nx))
    for c in doc["cells"]:
        vals[int(c["j"]), int(c["i"])] = float(c["v"])
    return CellFunction(g, vals)


def decomposition_to_json(d: LoopDecomposition):
    return {
        "grid": grid_to_json(d.grid),
        "levels": [{"t_lo": _num(lev.t_lo), "t_hi": _num(lev.t_hi),
                    "loops": [loop_to_json(lp) for lp in lev.loops],
                    "masses": [_num(m) for m in lev.masses]} for lev in d.levels],
    }


def decomposition_from_json(doc) -> LoopDecomposition:
    _need(doc, "grid", "levels")
    g = grid_from_json(doc["grid"])
    levels = []
    for lev in doc["levels"]:
        _need(lev, "t_lo", "t_hi", "loops")
        levels.append(Level(float(lev["t_lo"]), float(lev["t_hi"]),
                            tuple(loop_from_json(lp, g.h) for lp in lev["loops"])))
    return LoopDecomposition(g, tuple(levels))


# --- field model ----------------------------------------------------------

def setup_to_json(s: MeasurementSetup):
    return {"points": s.points.tolist(), "v": s.v.tolist(), "weights": s.weights.tolist(), "mu0": s.mu0}


def setup_from_json(doc) -> MeasurementSetup:
    _need(doc, "points")
    return MeasurementSetup(doc["points"], doc.get("v", (0.0, 0.0, 1.0)), doc.get("weights"), doc.get("mu0", 1.0))


def reading_to_json(r: Reading, s: MeasurementSetup | None = None):
    doc = {"values": [_num(v) for v in r.values]}
    if s is not None:
        doc["meta"] = {"v": s.v.tolist(), "mu0": s.mu0, "n_points": len(s)}
    return doc


def reading_from_json(doc) -> Reading:
    _need(doc, "values")
    return Reading(doc["values"])


def support_to_json(sup: Support):
    return {"grid": grid_to_json(sup.grid),
            "edges": [list(sup.grid.edge_key(e)) for e in sup.edges.tolist()],
            "dipole_sites": sup.dipole_sites.tolist()}


def support_from_json(doc) -> Support:
    """Decode a support; ``"edges": "all"`` selects every grid edge."""
    _need(doc, "grid", "edges")
    g = grid_from_json(doc["grid"])
    sites = doc.get("dipole_sites") or None
    if doc["edges"] == "all":
        return Support.full(g, sites)
    return Support(g, [g.edge_id(k, int(i), int(j)) for k, i, j in doc["edges"]], sites)


# --- inversion ------------------------------------------------------------

def options_to_json(o: SolveOptions):
    return {"lambda": o.lam, "max_iters": o.max_iters, "tol": o.tol, "restarts": o.restarts,
            "seed": o.seed, "check_every": o.check_every}


def options_from_json(doc) -> SolveOptions:
    _need(doc, "lambda")
    return SolveOptions(lam=float(doc["lambda"]), max_iters=int(doc.get("max_iters", 20000)),
                        tol=float(doc.get("tol", 1e-6)), restarts=int(doc.get("restarts", 0)),
                        seed=int(doc.get("seed", 0)), check_every=int(doc.get("check_every", 25)))


def certificate_from_json(doc) -> CertReport:
    _need(doc, "max_offsupport", "max_onsupport_gap", "passed", "tol")
    return CertReport(float(doc["max_offsupport"]), float(doc["max_onsupport_gap"]), bool(doc["passed"]),
                      float(doc["tol"]))


def solution_to_json(sol: Solution):
    we, mom = sol.support.split(sol.weights)
    return {
        "support": support_to_json(sol.support),
        "weights": {str(int(e)): _num(w) for e, w in zip(sol.support.edges.tolist(), we) if w != 0},
        "moments": [[_num(c) for c in m] for m in mom.tolist()],
        "lambda": sol.lam,
        "objective": sol.objective,
        "tv": sol.tv,
        "residual": [_num(v) for v in sol.residual.values],
        "certificate": sol.certificate.to_dict(),
        "iterations": sol.iterations,
        "converged": sol.converged,
        "polished": sol.polished,
        "measure": measure_to_json(sol.magnetization),
    }


def solution_from_json(doc) -> Solution:
    _need(doc, "support", "weights", "lambda", "objective", "certificate")
    sup = support_from_json(doc["support"])
    x = np.zeros(sup.n_unknowns)
    pos = {int(e): k for k, e in enumerate(sup.edges.tolist())}
    for e, w in doc["weights"].items():
        x[pos[int(e)]] = float(w)
    if sup.n_sites:
        x[sup.n_edges:] = np.asarray(doc.get("moments", np.zeros((sup.n_sites, 3))), float).ravel()
    return Solution(sup, x, float(doc["lambda"]), float(doc["objective"]), Reading(doc.get("residual", [])),
                    certificate_from_json(doc["certificate"]), int(doc.get("iterations", 0)),
                    bool(doc.get("converged", doc["certificate"]["passed"])), bool(doc.get("polished", False)))


def write_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
