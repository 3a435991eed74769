import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopfield import io
from loopfield.experiments import square_measures, square_setup
from loopfield.field import MeasurementSetup, Reading, Support, forward
from loopfield.grid import Grid, OrientedLoop, PixelSet
from loopfield.inversion import PATH_COLUMNS, SolveOptions, lambda_path, solve_ep2
from loopfield.loops import CellFunction, decompose, rotated_gradient
from loopfield.measures import DipoleField, EdgeMeasure, Magnetization


def through_text(doc):
    return json.loads(io.dumps(doc))


def test_dumps_is_canonical():
    assert io.dumps({"b": 1, "a": -0.0}) == io.dumps({"a": -0.0, "b": 1})
    assert io.dumps({"a": io._num(-0.0)}) == '{\n "a": 0.0\n}\n'
    with pytest.raises(ValueError):
        io.dumps({"a": float("nan")})


def test_grid_and_pixelset():
    g = Grid(3, 2, h=0.25, origin=(-1.0, 0.5))
    assert io.grid_from_json(through_text(io.grid_to_json(g))) == g
    P = PixelSet.from_ij(g, [(0, 0), (2, 1)])
    assert io.pixelset_from_json(through_text(io.pixelset_to_json(P))) == P


def test_loop_round_trip_and_orientation_check():
    lp = OrientedLoop(((0, 0), (0, 1), (1, 1), (1, 0)))
    doc = through_text(io.loop_to_json(lp))
    assert doc["orientation"] == "cw" and io.loop_from_json(doc) == lp
    doc["orientation"] = "ccw"
    with pytest.raises(io.SchemaError):
        io.loop_from_json(doc)


measures = st.lists(st.tuples(st.sampled_from(["h", "v"]), st.integers(0, 2), st.integers(0, 2),
                              st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)), max_size=8)


@settings(max_examples=100, deadline=None)
@given(measures)
def test_edge_measure_round_trip(items):
    m = EdgeMeasure.from_edges(Grid(3, 3, h=0.5), items)
    text = io.dumps(io.edge_measure_to_json(m))
    back = io.edge_measure_from_json(json.loads(text))
    assert back == m
    assert io.dumps(io.edge_measure_to_json(back)) == text


def test_magnetization_round_trip():
    g = Grid(2, 2)
    mu = Magnetization(EdgeMeasure.from_edges(g, [("v", 1, 1, 0.1)]),
                       DipoleField([[0.5, 1.5], [1.0, 0.25]], [[0, 0, 1e-3], [1.0 / 3, -2.0, 0.0]]))
    back = io.measure_from_json(through_text(io.measure_to_json(mu)))
    assert isinstance(back, Magnetization)
    assert back.edge_part == mu.edge_part
    assert np.array_equal(back.dipole_part.positions, mu.dipole_part.positions)
    assert np.array_equal(back.dipole_part.moments, mu.dipole_part.moments)
    plain = io.measure_from_json(through_text(io.measure_to_json(mu.edge_part)))
    assert isinstance(plain, EdgeMeasure)
    assert len(io.dipoles_from_json({"atoms": []})) == 0


@pytest.mark.parametrize("doc", [
    {"grid": {"nx": 1, "ny": 1, "h": 1.0}},
    {"grid": {"nx": 1, "ny": 1, "h": 1.0}, "edges": [{"kind": "h", "i": 0}]},
    {"edges": []},
    [1, 2],
])
def test_edge_measure_schema_errors(doc):
    with pytest.raises(io.SchemaError):
        io.edge_measure_from_json(doc)


def test_cell_function_and_decomposition_round_trip():
    rng = np.random.default_rng(0)
    g = Grid(6, 5, h=0.5)
    phi = CellFunction(g, rng.integers(-2, 3, size=(5, 6)).astype(float))
    assert io.cell_function_from_json(through_text(io.cell_function_to_json(phi))) == phi
    d = decompose(rotated_gradient(phi))
    doc = through_text(io.decomposition_to_json(d))
    back = io.decomposition_from_json(doc)
    assert back == d
    assert io.dumps(io.decomposition_to_json(back)) == io.dumps(doc)


def test_setup_reading_support_options():
    s = MeasurementSetup([[0.1, 0.2, 0.3], [1, 1, 1]], v=(0.6, 0.0, 0.8), weights=[0.25, 0.75], mu0=2.0)
    s2 = io.setup_from_json(through_text(io.setup_to_json(s)))
    for a in ("points", "v", "weights"):
        assert np.array_equal(getattr(s2, a), getattr(s, a))
    assert s2.mu0 == 2.0
    r = Reading([0.1, -1e-300])
    doc = through_text(io.reading_to_json(r, s))
    assert doc["meta"] == {"v": [0.6, 0.0, 0.8], "mu0": 2.0, "n_points": 2}
    assert np.array_equal(io.reading_from_json(doc).values, r.values)
    sup = Support(Grid(2, 2), [0, 5, 7], [[0.5, 0.5]])
    sup2 = io.support_from_json(through_text(io.support_to_json(sup)))
    assert np.array_equal(sup2.edges, sup.edges) and np.array_equal(sup2.dipole_sites, sup.dipole_sites)
    full = io.support_from_json({"grid": io.grid_to_json(Grid(2, 2)), "edges": "all"})
    assert full.n_edges == Grid(2, 2).n_edges
    o = SolveOptions(lam=0.03, max_iters=10, tol=1e-8, restarts=2, seed=9, check_every=5)
    assert io.options_from_json(through_text(io.options_to_json(o))) == o
    assert io.options_from_json({"lambda": 0.5}) == SolveOptions(lam=0.5)


def test_solution_round_trip():
    mu0, _ = square_measures()
    s = square_setup(n=11)
    sup = Support.full(Grid(1, 1), [[0.5, 0.5]])
    sol = solve_ep2(forward(mu0, s).values, s, sup, SolveOptions(lam=0.01))
    text = io.dumps(io.solution_to_json(sol))
    back = io.solution_from_json(json.loads(text))
    assert np.array_equal(back.weights, sol.weights)
    assert back.certificate == sol.certificate and back.objective == sol.objective
    assert back.converged == sol.converged and back.polished == sol.polished
    assert io.dumps(io.solution_to_json(back)) == text
    assert json.loads(text)["measure"]["grid"]["nx"] == 1


def test_files_and_bytes(tmp_path):
    m = EdgeMeasure.from_edges(Grid(2, 2), [("h", 1, 2, 0.1 + 0.2)])
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    io.write_json(a, io.edge_measure_to_json(m))
    io.write_json(b, io.edge_measure_to_json(io.edge_measure_from_json(io.read_json(a))))
    assert a.read_bytes() == b.read_bytes()
    (tmp_path / "bad.json").write_text("{oops")
    with pytest.raises(io.SchemaError):
        io.read_json(tmp_path / "bad.json")
    with pytest.raises(io.SchemaError):
        io.read_json(tmp_path / "missing.json")


def test_csv_export(tmp_path):
    mu0, _ = square_measures()
    s = square_setup(n=11)
    path = lambda_path(forward(mu0, s).values, s, Support.full(Grid(1, 1)), [1.0, 0.1])
    out = tmp_path / "path.csv"
    io.write_csv(out, path.rows, PATH_COLUMNS)
    rows = list(csv.DictReader(out.open()))
    assert tuple(rows[0]) == PATH_COLUMNS and len(rows) == 2
    assert float(rows[1]["lambda"]) == 0.1 and rows[1]["tv_distance"] == ""
