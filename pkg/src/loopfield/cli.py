"""Command line front end: ``loopfield decompose|forward|invert|certify|silent-basis|experiment``.

Exit codes: 0 success, 1 unreadable or malformed input, 2 a measure that must
be divergence-free is not, 3 the solver stopped without a passing
certificate, 4 a self-test or experiment criterion failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .experiments import EXPERIMENTS, run
from .field import forward
from .inversion import SolveOptions, solve_ep2, zero_threshold
from .loops import decompose, reconstruct, representing_measure, rotated_gradient
from .measures import DivergenceError, Magnetization, tv_norm
from .minimality import certify_tv_minimal, kernel_dimension_check, silent_loops, variational_certify

EXIT_OK, EXIT_PARSE, EXIT_DIVERGENCE, EXIT_NOT_CONVERGED, EXIT_CHECK = 0, 1, 2, 3, 4

log = logging.getLogger("loopfield")


class CheckFailed(RuntimeError):
    pass


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _edge_part(mu):
    return mu.edge_part if isinstance(mu, Magnetization) else mu


# --- self tests -----------------------------------------------------------

def _self_test(command: str) -> list[tuple[str, bool]]:
    """Small invariant checks run before the main task when ``--self-test`` is given."""
    from .experiments import random_integer_phi, sensor_setup, square_measures
    from .field import Support
    from .grid import Grid

    rng = np.random.default_rng(0)
    g = Grid(8, 8)
    results = []
    if command in ("decompose", "experiment"):
        ok = True
        for _ in range(5):
            nu = rotated_gradient(random_integer_phi(g, rng, block=4, rectangles=4))
            ok &= reconstruct(decompose(nu)) == nu
        results.append(("decompose round trip", bool(ok)))
    if command in ("forward", "invert", "experiment"):
        s = sensor_setup(g, 0.5, 1.0)
        loop = rotated_gradient(random_integer_phi(g, rng, block=4, rectangles=4))
        results.append(("loop silence", bool(np.abs(forward(loop, s).values).max() <= 1e-13)))
        a, b = square_measures(Grid(1, 1))
        fa, fb = forward(a, sensor_setup(Grid(1, 1))), forward(b, sensor_setup(Grid(1, 1)))
        fab = forward(a + b * 2.0, sensor_setup(Grid(1, 1)))
        results.append(("forward linearity", bool(np.allclose(fab.values, fa.values + 2.0 * fb.values,
                                                              rtol=1e-13, atol=1e-15))))
    if command in ("invert", "experiment"):
        g1 = Grid(1, 1)
        s = sensor_setup(g1)
        sup = Support.full(g1)
        f = forward(square_measures(g1)[0], s)
        lam0 = zero_threshold(f, s, sup)
        sol = solve_ep2(f, s, sup, SolveOptions(lam=1.01 * lam0))
        results.append(("zero above threshold", bool(sol.certificate.passed and not sol.weights.any())))
    if command in ("certify", "silent-basis", "experiment"):
        g1 = Grid(1, 1)
        sup = Support.full(g1)
        mu0, _ = square_measures(g1)
        results.append(("square verdict", certify_tv_minimal(mu0, sup).status == "minimal"))
        results.append(("square basis", len(silent_loops(sup)) == 1))
    return results


def _run_self_test(command: str) -> None:
    for name, ok in _self_test(command):
        print(f"self-test {'PASS' if ok else 'FAIL'}: {name}")
        if not ok:
            raise CheckFailed(f"self-test failed: {name}")


# --- commands -------------------------------------------------------------

def cmd_decompose(args) -> int:
    mu = io.measure_from_json(io.read_json(args.input))
    nu = _edge_part(mu)
    d = decompose(nu)
    resid = float(np.abs(reconstruct(d).weights - nu.weights).max()) if nu.grid.n_edges else 0.0
    out = _out(args)
    io.write_json(out / "decomposition.json", io.decomposition_to_json(d))
    atoms = [{"mass": a.mass, "t_lo": a.t_lo, "t_hi": a.t_hi, "loop": io.loop_to_json(a.loop), "atom_tv": 1.0}
             for a in representing_measure(d)]
    io.write_json(out / "representing_measure.json", {"atoms": atoms, "total_mass": d.total_mass})
    n_loops = sum(len(lev.loops) for lev in d.levels)
    print(f"levels: {len(d.levels)}  loops: {n_loops}  total mass: {d.total_mass:g}  TV: {tv_norm(nu):g}")
    for a in atoms:
        print(f"  level ({a['t_lo']:g}, {a['t_hi']:g})  {a['loop']['orientation']}  "
              f"{len(a['loop']['vertices'])} edges  mass {a['mass']:g}")
    print(f"reconstruction residual: {resid:g}")
    if args.plot:
        from .plotting import plot_decomposition
        plot_decomposition(d, out / "decomposition.png")
    return EXIT_OK if resid == 0 else EXIT_CHECK


def cmd_forward(args) -> int:
    mu = io.measure_from_json(io.read_json(args.input))
    s = io.setup_from_json(io.read_json(args.setup))
    r = forward(mu, s)
    out = _out(args)
    io.write_json(out / "reading.json", io.reading_to_json(r, s))
    print(f"points: {len(s)}  max |reading|: {np.abs(r.values).max():g}")
    return EXIT_OK


def _options(args) -> SolveOptions:
    doc = io.read_json(args.config) if args.config else {}
    if args.lam is not None:
        doc["lambda"] = args.lam
    if args.seed is not None:
        doc["seed"] = args.seed
    if "lambda" not in doc:
        raise io.SchemaError("no lambda given (use --lambda or a config with a 'lambda' field)")
    return io.options_from_json(doc)


def cmd_invert(args) -> int:
    f = io.reading_from_json(io.read_json(args.input))
    s = io.setup_from_json(io.read_json(args.setup))
    sup = io.support_from_json(io.read_json(args.support))
    opts = _options(args)
    sol = solve_ep2(f, s, sup, opts)
    out = _out(args)
    io.write_json(out / "solution.json", io.solution_to_json(sol))
    c = sol.certificate
    print(f"objective {sol.objective:.12g}  TV {sol.tv:.12g}  iterations {sol.iterations}  "
          f"certificate {'passed' if c.passed else 'FAILED'} (off {c.max_offsupport:.3g}, gap {c.max_onsupport_gap:.3g})")
    return EXIT_OK if c.passed else EXIT_NOT_CONVERGED


def cmd_certify(args) -> int:
    mu = io.measure_from_json(io.read_json(args.input))
    if args.support:
        sup = io.support_from_json(io.read_json(args.support))
    else:
        from .field import Support
        sup = Support.full(_edge_part(mu).grid)
    seed = args.seed or 0
    v = certify_tv_minimal(mu, sup, mode=args.mode, seed=seed)
    var = variational_certify(mu, sup, samples=args.samples, seed=seed)
    doc = {"verdict": v.to_dict(), "variational": var.to_dict()}
    io.write_json(_out(args) / "verdict.json", doc)
    print(f"verdict: {v.status} (worst cycle margin {v.margin}, geometric test {v.geometric}, "
          f"{v.cycles_checked} cycles)  min variational pairing {var.min_pairing:.6g}")
    return EXIT_OK


def cmd_silent_basis(args) -> int:
    sup = io.support_from_json(io.read_json(args.support))
    loops = silent_loops(sup)
    doc = {"count": len(loops), "loops": [io.loop_to_json(lp) for lp in loops]}
    if args.setup:
        kr = kernel_dimension_check(io.setup_from_json(io.read_json(args.setup)), sup)
        doc["kernel"] = kr.to_dict()
        print(f"nullity {kr.nullity}  cycle rank {kr.expected}  {kr.verdict}")
    io.write_json(_out(args) / "silent_basis.json", doc)
    print(f"silent basis: {len(loops)} loops")
    return EXIT_OK


def _write_artifact(out: Path, name: str, obj) -> None:
    from .inversion import Solution
    from .measures import EdgeMeasure
    from .plotting import plot_measure

    if isinstance(obj, Solution):
        io.write_json(out / f"{name}.json", io.solution_to_json(obj))
        plot_measure(obj.magnetization, out / f"{name}.png", name)
    elif isinstance(obj, (EdgeMeasure, Magnetization)):
        io.write_json(out / f"{name}.json", io.measure_to_json(obj))
        plot_measure(obj, out / f"{name}.png", name)
    else:
        io.write_json(out / f"{name}.json", obj)


def cmd_experiment(args) -> int:
    from .plotting import plot_lambda_path

    cfg = io.read_json(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    rep = run(args.name, cfg)
    out = _out(args)
    for c in rep.criteria:
        print(c.line())
    print(f"{rep.name}: {'PASS' if rep.passed else 'FAIL'} in {rep.elapsed:.2f} s")
    io.write_json(out / "report.json", rep.to_dict())
    for name, (rows, cols) in rep.tables.items():
        io.write_csv(out / f"{name}.csv", rows, cols)
        if name == "lambda_path":
            plot_lambda_path(rows, out / "lambda_path.png")
    for name, obj in rep.artifacts.items():
        _write_artifact(out, name, obj)
    if not rep.passed:
        print(f"failing criteria: {', '.join(rep.failing())}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# --- argument parsing -----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loopfield", description="Planar magnetization loops, fields and TV inversion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_input=True):
        if need_input:
            sp.add_argument("--input", required=True, help="input JSON file")
        sp.add_argument("--out-dir", default=".", help="directory for output files")
        sp.add_argument("--self-test", action="store_true", help="run invariant checks first")
        sp.add_argument("--seed", type=int, default=None)
        return sp

    sp = common(sub.add_parser("decompose", help="loop decomposition of a divergence-free edge measure"))
    sp.add_argument("--plot", action="store_true", help="also render decomposition.png")
    sp.set_defaults(func=cmd_decompose)

    sp = common(sub.add_parser("forward", help="field readings of a measure"))
    sp.add_argument("--setup", required=True)
    sp.set_defaults(func=cmd_forward)

    sp = common(sub.add_parser("invert", help="TV-penalised inversion of a reading"))
    sp.add_argument("--setup", required=True)
    sp.add_argument("--support", required=True)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--config", help="JSON solver options")
    sp.set_defaults(func=cmd_invert)

    sp = common(sub.add_parser("certify", help="TV-minimality verdict for a measure"))
    sp.add_argument("--support", help="support JSON (default: every edge of the grid)")
    sp.add_argument("--mode", choices=("exhaustive", "sampled"), default="exhaustive")
    sp.add_argument("--samples", type=int, default=200)
    sp.set_defaults(func=cmd_certify)

    sp = common(sub.add_parser("silent-basis", help="fundamental silent loops of a support"), need_input=False)
    sp.add_argument("--support", required=True)
    sp.add_argument("--setup", help="also run the numerical kernel check against this setup")
    sp.set_defaults(func=cmd_silent_basis)

    sp = common(sub.add_parser("experiment", help="run a named acceptance scenario"), need_input=False)
    sp.add_argument("name", choices=sorted(EXPERIMENTS))
    sp.add_argument("--config", help="JSON overrides of the scenario defaults")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; keep 2 for divergence failures
        return EXIT_OK if exc.code in (0, None) else EXIT_PARSE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.self_test:
            _run_self_test(args.command)
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except CheckFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (io.SchemaError, ValueError, KeyError, TypeError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
