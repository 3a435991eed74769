import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopfield.experiments import reflect_edges, square_measures, square_setup
from loopfield.field import Support, forward, plane_setup
from loopfield.grid import Grid, OrientedLoop
from loopfield.inversion import (PATH_COLUMNS, Problem, SolveOptions, coordinate_tv, lambda_path,
                                 optimality_certificate, solve_ep2, solve_multistart, zero_threshold)
from loopfield.measures import EdgeMeasure, edge_measure_from_loop

G1 = Grid(1, 1)
SQ = Support.full(G1)
LOOP = SQ.vector(edge_measure_from_loop(G1, OrientedLoop(((0, 0), (1, 0), (1, 1), (0, 1)))))


@pytest.fixture(scope="module")
def square():
    mu0, _ = square_measures()
    s = square_setup()
    return forward(mu0, s).values, s


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(lam=0.0)
    with pytest.raises(ValueError):
        SolveOptions(lam=1.0, tol=0.0)


def test_zero_data_gives_zero(square):
    _, s = square
    sol = solve_ep2(np.zeros(len(s)), s, SQ, SolveOptions(lam=0.1))
    assert not sol.weights.any() and sol.objective == 0.0 and sol.certificate.passed


@pytest.mark.parametrize("factor", [1.0, 1.5, 10.0])
def test_large_lambda_gives_certified_zero(square, factor):
    f, s = square
    lam = factor * zero_threshold(f, s, SQ)
    sol = solve_ep2(f, s, SQ, SolveOptions(lam=lam))
    assert not sol.weights.any() and sol.certificate.passed and sol.iterations == 0
    assert sol.objective == pytest.approx(s.norm(f) ** 2, rel=1e-14)


def test_zero_threshold_oracle(square):
    f, s = square
    A = Problem(f, s, SQ).A
    assert zero_threshold(f, s, SQ) == pytest.approx(2 * np.abs(A.T @ (np.sqrt(s.weights) * f)).max(), rel=1e-14)


def test_certificate_examples(square):
    f, s = square
    thr = zero_threshold(f, s, SQ)
    assert optimality_certificate(np.zeros(4), f, s, SQ, 1e6).passed
    bad = optimality_certificate(np.zeros(4), f, s, SQ, 0.5 * thr)
    assert not bad.passed and bad.max_offsupport == pytest.approx(2.0, rel=1e-12)


@pytest.fixture(scope="module")
def square_solution(square):
    f, s = square
    return solve_ep2(f, s, SQ, SolveOptions(lam=0.1))


def test_square_solution_certified(square_solution):
    sol = square_solution
    assert sol.converged and sol.certificate.passed and sol.certificate.tol == 1e-6
    assert sol.certificate.max_offsupport <= 1 + 1e-6 and sol.certificate.max_onsupport_gap <= 1e-6


def test_square_solution_is_symmetric(square_solution):
    m = square_solution.magnetization.edge_part
    assert np.abs(reflect_edges(m).weights - m.weights).max() <= 1e-6
    assert np.all(m.weights != 0)


def test_square_solution_minimises_tv_along_its_fibre(square_solution):
    # brute force over the cycle coefficient: the data term is constant along w + t * loop
    w = square_solution.weights
    ts = np.linspace(-1.0, 1.0, 20001)
    tvs = np.abs(w[None, :] + ts[:, None] * LOOP[None, :]).sum(axis=1)
    assert tvs.min() >= coordinate_tv(SQ, w) - 1e-9
    flat = ts[tvs <= tvs.min() + 1e-9]
    assert flat.min() <= 0.0 <= flat.max()


def test_objective_recomputable_and_bounded(square, square_solution):
    f, s = square
    sol = square_solution
    recomputed = s.norm(f - forward(sol.magnetization, s).values) ** 2 + sol.lam * sol.tv
    assert sol.objective == pytest.approx(recomputed, rel=1e-10)
    assert sol.objective <= s.norm(f) ** 2
    assert s.norm(sol.residual.values) ** 2 + sol.lam * sol.tv == pytest.approx(sol.objective, rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**16), st.floats(0.05, 0.9))
def test_random_instances_certified(seed, frac):
    rng = np.random.default_rng(seed)
    g = Grid(3, 2, h=0.5)
    sup = Support(g, rng.choice(g.n_edges, size=8, replace=False))
    s = plane_setup(np.linspace(-0.5, 2.0, 9), np.linspace(-0.5, 1.5, 7), 0.2)
    f = forward(EdgeMeasure(g, rng.standard_normal(g.n_edges)), s).values
    lam = frac * zero_threshold(f, s, sup)
    sol = solve_ep2(f, s, sup, SolveOptions(lam=lam))
    assert sol.certificate.passed
    cert = optimality_certificate(sol.weights, f, s, sup, lam)
    assert cert == sol.certificate
    # optimality against random perturbations
    P = Problem(f, s, sup)
    for _ in range(20):
        d = rng.standard_normal(sup.n_unknowns) * 1e-3
        assert P.objective(sol.weights + d, lam) >= sol.objective - 1e-12 * max(1.0, sol.objective)


@pytest.mark.parametrize("c", [0.2, 3.0])
def test_certificate_scales_with_data(square, c):
    # F_{cf, c lam}(c w) = c^2 F_{f, lam}(w); weights themselves are not compared (minimizers need not be unique)
    f, s = square
    a = solve_ep2(f, s, SQ, SolveOptions(lam=0.1))
    b = solve_ep2(c * f, s, SQ, SolveOptions(lam=0.1 * c))
    assert a.certificate.passed and b.certificate.passed
    assert b.objective == pytest.approx(c * c * a.objective, rel=1e-8)


def test_dipole_unknowns():
    g = Grid(2, 2)
    sup = Support(g, [], [[1.0, 1.0]])
    s = plane_setup(np.linspace(-1, 3, 9), np.linspace(-1, 3, 9), 0.5)
    f = forward(sup.magnetization([0.0, 0.0, 1.0]), s).values
    sol = solve_ep2(f, s, sup, SolveOptions(lam=1e-4 * zero_threshold(f, s, sup)))
    assert sol.certificate.passed
    assert np.allclose(sol.weights, [0, 0, 1.0], atol=1e-3)


def test_multistart_starts(square):
    f, s = square
    sols = solve_multistart(f, s, SQ, SolveOptions(lam=0.1, restarts=3, seed=5))
    assert len(sols) == 4 and all(x.certificate.passed for x in sols)
    objs = [x.objective for x in sols]
    assert max(objs) - min(objs) <= 1e-9 * max(objs)


@pytest.mark.parametrize("schedule", [[1.0, 1.0], [0.1, 0.3], [1.0, -0.1], []])
def test_lambda_path_validation(square, schedule):
    f, s = square
    with pytest.raises(ValueError):
        lambda_path(f, s, SQ, schedule)


def test_lambda_path_zero_data(square):
    _, s = square
    path = lambda_path(np.zeros(len(s)), s, SQ, [1.0, 0.1, 0.01])
    assert all(not sol.weights.any() for sol in path.solutions)
    assert all(set(row) == set(PATH_COLUMNS) for row in path.rows)
    assert all(row["tv_distance"] is None for row in path.rows)


def test_lambda_path_square_with_symmetric_noise(square):
    f, s = square
    n = int(round(np.sqrt(len(s))))
    noise = np.random.default_rng(0).standard_normal((n, n)) * 1e-4
    noise = (noise + noise.T) / 2
    mu0, mu1 = square_measures()
    path = lambda_path(f, s, SQ, [1.0, 0.3, 0.1, 0.03, 0.01], noise=noise.ravel(), reference=(mu0 + mu1) * 0.5)
    assert all(row["certified"] for row in path.rows)
    assert np.abs(np.abs(path.terminal.weights) - 0.5).max() <= 0.01
    tvs = [row["tv"] for row in path.rows]
    assert tvs == sorted(tvs)
    assert path.rows[-1]["tv_distance"] <= 0.02


def test_noisy_data_warning_does_not_raise(caplog):
    g = Grid(2, 2)
    s = plane_setup(np.linspace(0, 2, 5), np.linspace(0, 2, 5), 0.3)
    f = forward(EdgeMeasure(g, np.arange(g.n_edges, dtype=float)), s).values
    sol = solve_ep2(f, s, Support.full(g), SolveOptions(lam=1e-6, max_iters=3, check_every=1))
    assert not sol.converged and sol.iterations == 3
    assert "without a passing certificate" in caplog.text
