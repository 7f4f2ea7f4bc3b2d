"""Command-line entry point ``nlpotlab``.

Exit codes: 0 success, 2 solver non-convergence, 3 bad input or config.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from nlpotlab import io as nio
from nlpotlab.experiment import EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_OK, csv_text, write_csv

log = logging.getLogger("nlpotlab")


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(path, header, rows) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(csv_text(header, rows))
    else:
        write_csv(path, header, rows)


def _coords(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise _Fail(EXIT_CONFIG, f"bad coordinates {text!r}") from None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_wolff_eval(args) -> int:
    from nlpotlab.wolff import WolffParams, singular_ratio, wolff_potential

    mu = nio.read_measure(args.measure)
    pts = nio.read_points(args.points, dim=mu.dim)
    params = WolffParams(args.p, mu.dim, r0=args.r0)
    rows = []
    for x in pts:
        rows.append((*x, wolff_potential(mu, params, x), singular_ratio(mu, params, x)))
    axes = [f"x{k + 1}" for k in range(mu.dim)]
    _emit(args.out, (*axes, "W", "singular_ratio"), rows)
    return EXIT_OK


def cmd_capacity_solve(args) -> int:
    from nlpotlab.capacity import CondenserProblem, capacity

    dom = nio.parse_domain(args.domain, args.dim, args.cells, octant=args.octant)
    mask = nio.parse_inner(args.inner, dom)
    res = capacity(CondenserProblem(dom, mask, args.p))
    _emit(args.out, ("value", "distribution_mass", "negative_mass", "iterations", "residual", "converged"),
          [(res.value, res.distribution_mass, res.negative_mass, res.iterations, res.residual_norm, res.converged)])
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_thinness_classify(args) -> int:
    from nlpotlab.thinness import singular_thin_sum, wiener_sum

    fam = nio.parse_family(args.family, args.n)
    fn = wiener_sum if args.criterion == "wiener" else singular_thin_sum
    rep = fn(fam, args.p, (1, args.depth))
    rows = [(i, t, s, rep.verdict, rep.beta) for i, t, s in rep.rows()]
    _emit(args.out, ("i", "term", "partial_sum", "verdict", "beta"), rows)
    print(f"{fam.label or fam.kind}: {rep.verdict} ({rep.criterion}, beta={rep.beta:.4g})", file=sys.stderr)
    return EXIT_OK


def cmd_thinness_blowup(args) -> int:
    from nlpotlab.thinness import blowup_measure

    fam = nio.parse_family(args.family, args.n)
    try:
        res = blowup_measure(fam, args.p, args.m, (1, args.depth))
    except ValueError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from None
    nio.write_measure(res.measure, args.out)
    print(f"blow-up measure with total mass {res.total_mass!r} written to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_plaplace_solve(args) -> int:
    from nlpotlab.plaplace import solve_grid

    mu = nio.read_measure(args.measure)
    dom = nio.parse_domain(args.domain, mu.dim, args.cells, octant=args.octant)
    sol = solve_grid(mu, args.p, dom)
    nio.write_field(args.out, dom, sol.values)
    print(f"iterations {sol.diagnostics['iterations']}, residual {sol.diagnostics['residual']:.3e}",
          file=sys.stderr)
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_asymptotics_fit(args) -> int:
    from nlpotlab.asymptotics import estimate_m

    mu = nio.read_measure(args.measure)
    x0 = None if args.x0 is None else _coords(args.x0)
    if x0 is not None and x0.size != mu.dim:
        raise _Fail(EXIT_CONFIG, "x0 has the wrong dimension")
    fit = estimate_m(mu, args.p, x0=x0, depth=args.depth, seed=args.seed, grid_cells=args.cells)
    _emit(args.out, ("m_liminf", "m_excluded_limit", "point_charge", "c0", "spread", "conclusive"),
          [(fit.m_liminf, fit.m_excluded_limit, fit.point_charge, fit.c0, fit.spread, fit.conclusive)])
    return EXIT_OK


def cmd_cones_pgamma(args) -> int:
    from nlpotlab.cones import p_gamma_k

    p = p_gamma_k(args.n, args.k)
    _emit(None, ("n", "k", "p_gamma", "exact"), [(args.n, args.k, float(p), str(p))])
    return EXIT_OK


def cmd_cones_check(args) -> int:
    from nlpotlab.cones import hessian_cone_check

    dom, values = nio.read_field(args.field)
    singular = None
    if args.exclude_radius > 0:
        singular = dom.radius() <= args.exclude_radius
    mask = hessian_cone_check(values, args.k, dom, singular=singular)
    checked = ~dom.boundary_mask
    if singular is not None:
        checked &= ~singular
    pts = dom.points()
    rows = [(*pts[j], bool(mask.flat[j])) for j in np.flatnonzero(checked.ravel())]
    axes = [f"x{k + 1}" for k in range(dom.dim)]
    _emit(args.out, (*axes, "in_cone"), rows)
    passed = sum(r[-1] for r in rows)
    print(f"{passed} of {len(rows)} interior nodes pass", file=sys.stderr)
    return EXIT_OK


def cmd_experiment_run(args) -> int:
    from nlpotlab.experiment import run

    return run(args.config)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlpotlab", description="Nonlinear potential theory at desk scale.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    top = ap.add_subparsers(dest="group", required=True)

    g = top.add_parser("wolff", help="Wolff potentials").add_subparsers(dest="cmd", required=True)
    c = g.add_parser("eval", help="evaluate W and the singular ratio at points")
    c.add_argument("--measure", required=True)
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--r0", type=float, default=1.0)
    c.add_argument("--points", required=True)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_wolff_eval)

    g = top.add_parser("capacity", help="variational p-capacity").add_subparsers(dest="cmd", required=True)
    c = g.add_parser("solve", help="capacity of a condenser")
    c.add_argument("--domain", required=True, help="ball:R, cube:L or shell:r:R")
    c.add_argument("--inner", required=True, help="ball:r[:c], box:a, shell:a:b or mask:FILE")
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--dim", type=int, default=3)
    c.add_argument("--cells", type=int, default=32)
    c.add_argument("--octant", action="store_true", help="store one orthant (symmetric problems only)")
    c.add_argument("--out")
    c.set_defaults(fn=cmd_capacity_solve)

    g = top.add_parser("thinness", help="thinness sums").add_subparsers(dest="cmd", required=True)
    c = g.add_parser("classify", help="partial sums and verdict")
    c.add_argument("--family", required=True, help="empty, full_annuli, ray_segment, power:EXP or log:EXP")
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--n", type=int, default=3)
    c.add_argument("--criterion", choices=("wiener", "singular"), default="singular")
    c.add_argument("--depth", type=int, default=12)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_thinness_classify)
    c = g.add_parser("blowup", help="measure blowing up along a thin set")
    c.add_argument("--family", required=True)
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--m", type=float, default=1.0)
    c.add_argument("--n", type=int, default=3)
    c.add_argument("--depth", type=int, default=12)
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_thinness_blowup)

    g = top.add_parser("plaplace", help="p-Laplace solves").add_subparsers(dest="cmd", required=True)
    c = g.add_parser("solve", help="grid solve of -Delta_p u = mu, u = 0 on the boundary")
    c.add_argument("--measure", required=True)
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--domain", required=True)
    c.add_argument("--cells", type=int, default=32)
    c.add_argument("--octant", action="store_true")
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_plaplace_solve)

    g = top.add_parser("asymptotics", help="singular asymptotics").add_subparsers(dest="cmd", required=True)
    c = g.add_parser("fit", help="estimate the singular coefficient m")
    c.add_argument("--measure", required=True)
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--x0", help="comma-separated coordinates (default origin)")
    c.add_argument("--depth", type=int, default=8)
    c.add_argument("--cells", type=int, default=64)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_asymptotics_fit)

    g = top.add_parser("cones", help="Gamma^k cones").add_subparsers(dest="cmd", required=True)
    c = g.add_parser("pgamma", help="comparison index of Gamma^k")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--k", type=int, required=True)
    c.set_defaults(fn=cmd_cones_pgamma)
    c = g.add_parser("check", help="nodes where -D^2 u lies in Gamma^k")
    c.add_argument("--field", required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--exclude-radius", type=float, default=0.0, help="skip nodes this close to the origin")
    c.add_argument("--out")
    c.set_defaults(fn=cmd_cones_check)

    g = top.add_parser("experiment", help="config-driven experiments").add_subparsers(dest="cmd", required=True)
    c = g.add_parser("run", help="run an experiment config")
    c.add_argument("config")
    c.set_defaults(fn=cmd_experiment_run)
    return ap


def main(argv=None) -> int:
    from nlpotlab.capacity import ConvergenceError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (nio.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
