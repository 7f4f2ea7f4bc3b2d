"""Config-driven experiment runner.

A config is an INI-style text file::

    [experiment]
    kind = wolff-asymptotics
    output = results/wolff
    seed = 0

    [parameters]
    n = 3
    p = 2
    atom_mass = 1
    depth = 12

``kind`` is one of the names in ``KINDS``; the accepted keys of
``[parameters]`` are listed per kind in ``PARAMETERS`` (relative paths resolve
against the config file).  Every experiment writes CSV tables with a header
row and floats at full ``repr`` precision, plus SVG plots.  All parameters
and referenced files are validated before any output is created.

Exit codes: 0 success, 2 solver non-convergence (artifacts are still written
and carry a ``converged`` column), 3 configuration error (nothing written).
"""

from __future__ import annotations

import configparser
import csv
import io as _io
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from nlpotlab import io as nio
from nlpotlab.measures import RadialPart, RadonMeasure
from nlpotlab.parallel import parallel_map
from nlpotlab.plot import emit_plot

log = logging.getLogger(__name__)

EXIT_OK, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 2, 3

KINDS = ("wolff-asymptotics", "capacity-study", "thinness-study", "plaplace-asymptotics", "blowup", "cones")


class ConfigError(ValueError):
    pass


# key -> (parser, default); default None means required
def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _ints(s):
    return [int(x) for x in s.replace(",", " ").split()]


def _floats(s):
    return [float(x) for x in s.replace(",", " ").split()]


def _words(s):
    return [x for x in s.replace(",", " ").split()]


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _path(s):
    return Path(s)


PARAMETERS = {
    "wolff-asymptotics": {
        "n": (_int, "3"), "p": (_float, "2"), "r0": (_float, "1"), "atom_mass": (_float, "1"),
        "measure": (_path, ""), "depth": (_int, "12"), "direction": (_floats, ""),
    },
    "capacity-study": {
        "n": (_int, "3"), "p": (_float, "2"), "inner": (_float, "1"), "outer": (_float, "2"),
        "cells": (_ints, "16 32"), "octant": (_bool, "true"),
    },
    "thinness-study": {
        "n": (_int, "3"), "p": (_float, "2"), "families": (_words, "power:2 full_annuli empty"),
        "criterion": (_words, "singular wiener"), "i_min": (_int, "1"), "i_max": (_int, "12"),
        "ball_cells": (_int, "40"), "annulus_cells": (_int, "64"),
    },
    "plaplace-asymptotics": {
        "n": (_int, "3"), "p": (_float, "2"), "atom_mass": (_float, "1"), "density": (_float, "0"),
        "measure": (_path, ""), "depth": (_int, "10"), "r0": (_float, "0.333333333333333333"),
        "grid_cells": (_int, "64"),
    },
    "blowup": {
        "n": (_int, "3"), "p": (_float, "2"), "m": (_float, "1"), "family": (_words, "power:2"),
        "i_min": (_int, "1"), "i_max": (_int, "12"), "r0": (_float, "0.25"), "ball_cells": (_int, "40"),
    },
    "cones": {"n": (_ints, "4"), "k": (_ints, "2")},
}


@dataclass
class ExperimentConfig:
    kind: str
    output: Path
    seed: int
    params: dict
    source: Optional[Path] = None


@dataclass
class Artifacts:
    """Tables and plots held in memory until the run finishes."""

    tables: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    converged: bool = True

    def table(self, name: str, header, rows) -> None:
        self.tables[name] = (list(header), [list(r) for r in rows])

    def plot(self, name: str, series, axes) -> None:
        self.plots.append((name, series, axes))


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    Path(path).write_text(csv_text(header, rows))


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return parse_config(cp, base=path.parent, source=path)


def parse_config(cp: configparser.ConfigParser, base: Path = Path("."), source=None) -> ExperimentConfig:
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    exp = cp["experiment"]
    unknown = set(exp) - {"kind", "output", "seed"}
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
    kind = exp.get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")
    if not exp.get("output", "").strip():
        raise ConfigError("[experiment] needs an output directory")
    output = Path(exp["output"].strip())
    if not output.is_absolute():
        output = base / output
    try:
        seed = int(exp.get("seed", "0"))
    except ValueError:
        raise ConfigError("seed must be an integer") from None
    for section in cp.sections():
        if section not in ("experiment", "parameters"):
            raise ConfigError(f"unknown section [{section}]")
    raw = dict(cp["parameters"]) if cp.has_section("parameters") else {}
    spec = PARAMETERS[kind]
    unknown = set(raw) - set(spec)
    if unknown:
        raise ConfigError(f"unknown parameters for {kind}: {sorted(unknown)}")
    params = {}
    for key, (conv, default) in spec.items():
        text = raw.get(key, default)
        if text is None:
            raise ConfigError(f"missing parameter {key!r}")
        if text == "":
            params[key] = None
            continue
        try:
            params[key] = conv(text)
        except ValueError as exc:
            raise ConfigError(f"parameter {key!r}: {exc}") from None
        if conv is _path and not params[key].is_absolute():
            params[key] = base / params[key]
    cfg = ExperimentConfig(kind, output, seed, params, source)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Semantic checks; every referenced file must exist before the run."""
    p = cfg.params
    for key, value in p.items():
        if isinstance(value, Path) and not value.is_file():
            raise ConfigError(f"{key}: file not found: {value}")
    if cfg.kind == "cones":
        if len(p["n"]) != len(p["k"]) and len(p["n"]) != 1 and len(p["k"]) != 1:
            raise ConfigError("cones: n and k lists must have equal length or length one")
        for n, k in _cone_pairs(p):
            if not 1 <= k <= n / 2:
                raise ConfigError(f"cones: need 1 <= k <= n/2, got n={n}, k={k}")
        return
    n, pp = p["n"], p["p"]
    if not 2 <= n <= 4:
        raise ConfigError("n must be 2, 3 or 4")
    if not 1.0 < pp <= n:
        raise ConfigError("need 1 < p <= n")
    if cfg.kind == "capacity-study":
        if not 0 < p["inner"] < p["outer"]:
            raise ConfigError("need 0 < inner < outer")
        if not p["cells"] or min(p["cells"]) < 4:
            raise ConfigError("cells must list grid sizes >= 4")
    if cfg.kind in ("thinness-study", "blowup"):
        if p["i_min"] < 1 or p["i_max"] - p["i_min"] < 3:
            raise ConfigError("need i_min >= 1 and at least four annuli")
        fams = p["families"] if cfg.kind == "thinness-study" else p["family"]
        if cfg.kind == "blowup" and len(fams) != 1:
            raise ConfigError("blowup takes exactly one family")
        for spec in fams:
            try:
                nio.parse_family(spec, n)
            except nio.FormatError as exc:
                raise ConfigError(str(exc)) from None
    if cfg.kind == "thinness-study":
        bad = set(p["criterion"]) - {"singular", "wiener"}
        if bad:
            raise ConfigError(f"unknown criterion {sorted(bad)}")
    if cfg.kind in ("wolff-asymptotics", "plaplace-asymptotics"):
        if p["depth"] < 3:
            raise ConfigError("depth must be at least 3")
        if p.get("direction") is not None and len(p["direction"]) != n:
            raise ConfigError("direction must have n components")


def _cone_pairs(p) -> list:
    ns, ks = p["n"], p["k"]
    if len(ns) == 1:
        ns = ns * len(ks)
    if len(ks) == 1:
        ks = ks * len(ns)
    return list(zip(ns, ks))


def _measure(cfg: ExperimentConfig) -> RadonMeasure:
    p = cfg.params
    n = p["n"]
    if p.get("measure") is not None:
        try:
            return nio.read_measure(p["measure"], dim=n)
        except nio.FormatError as exc:
            raise ConfigError(str(exc)) from None
    mu = RadonMeasure.dirac(np.zeros(n), p["atom_mass"]) if p["atom_mass"] > 0 else RadonMeasure.zero(n)
    if p.get("density"):
        mu = mu + RadonMeasure(n, radial_parts=(RadialPart.uniform(np.zeros(n), 1.0, p["density"]),))
    return mu


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _wolff(cfg: ExperimentConfig, out: Artifacts) -> None:
    from nlpotlab.wolff import WolffParams, singular_ratio, wolff_potential

    p = cfg.params
    n = p["n"]
    mu = _measure(cfg)
    params = WolffParams(p["p"], n, r0=p["r0"])
    d = np.zeros(n)
    d[0] = 1.0
    if p["direction"] is not None:
        d = np.asarray(p["direction"], dtype=float)
        d /= np.linalg.norm(d)
    rows = []
    for k in range(1, p["depth"] + 1):
        r = p["r0"] * 2.0 ** (-k)
        x = r * d
        rows.append((k, r, math.log(1.0 / r), wolff_potential(mu, params, x), singular_ratio(mu, params, x)))
    out.table("wolff_ladder.csv", ("k", "radius", "log_inv_radius", "W", "singular_ratio"), rows)
    out.plot("singular_ratio.svg", {"singular ratio": ([r[2] for r in rows], [r[4] for r in rows])},
             ("log(1/|x|)", "W(x, r0) / normalizer", "Wolff singular ratio"))


def _capacity(cfg: ExperimentConfig, out: Artifacts) -> None:
    from nlpotlab.capacity import capacity, capacity_sphere_closed_form, spherical_condenser

    p = cfg.params
    exact = capacity_sphere_closed_form(p["n"], p["p"], p["inner"], p["outer"])

    def run(cells):
        prob = spherical_condenser(p["n"], p["p"], p["inner"], p["outer"], cells=cells, octant=p["octant"])
        return cells, prob.domain.h, capacity(prob)

    rows = []
    for cells, h, res in parallel_map(run, p["cells"]):
        out.converged &= bool(res.converged)
        rows.append((cells, h, res.value, exact, (res.value - exact) / exact, res.distribution_mass,
                     res.negative_mass, res.iterations, res.residual_norm, res.converged))
    out.table("capacity.csv", ("cells", "h", "value", "closed_form", "rel_error", "distribution_mass",
                               "negative_mass", "iterations", "residual", "converged"), rows)
    out.plot("capacity.svg", {"grid": ([math.log2(r[0]) for r in rows], [r[2] for r in rows]),
                              "closed form": ([math.log2(r[0]) for r in rows], [exact] * len(rows))},
             ("log2(cells)", "capacity", "spherical condenser"))


def _thinness(cfg: ExperimentConfig, out: Artifacts) -> None:
    from nlpotlab.thinness import UnitCapacities, singular_thin_sum, wiener_sum

    p = cfg.params
    n, pp = p["n"], p["p"]
    cache = UnitCapacities(n, pp, ball_cells=p["ball_cells"], annulus_cells=p["annulus_cells"])
    jobs = [(spec, crit) for spec in p["families"] for crit in p["criterion"]]
    rng = (p["i_min"], p["i_max"])

    def run(job):
        spec, crit = job
        fam = nio.parse_family(spec, n)
        fn = singular_thin_sum if crit == "singular" else wiener_sum
        return spec, crit, fn(fam, pp, rng, cache=cache)

    detail, summary, series = [], [], {}
    for spec, crit, rep in parallel_map(run, jobs):
        for i, t, s in rep.rows():
            detail.append((spec, crit, i, t, s))
        summary.append((spec, crit, rep.beta, rep.verdict, float(rep.partial_sums[-1]) if len(rep.partial_sums) else 0.0))
        series[f"{spec} ({crit})"] = (rep.indices, rep.partial_sums)
    out.table("thinness_terms.csv", ("family", "criterion", "i", "term", "partial_sum"), detail)
    out.table("thinness_summary.csv", ("family", "criterion", "beta", "verdict", "partial_sum"), summary)
    out.plot("thinness.svg", series, ("i", "partial sum", "dyadic thinness sums"))


def _plaplace(cfg: ExperimentConfig, out: Artifacts) -> None:
    from nlpotlab.asymptotics import estimate_m

    p = cfg.params
    mu = _measure(cfg)
    fit = estimate_m(mu, p["p"], depth=p["depth"], r0=p["r0"], seed=cfg.seed, grid_cells=p["grid_cells"])
    rows = [(i, r, math.log(r), m) for i, (r, m) in enumerate(zip(fit.radii, fit.m_samples))]
    out.table("m_ladder.csv", ("rung", "radius", "log_radius", "m_of_r"), rows)
    out.table("m_fit.csv", ("m_liminf", "m_excluded_limit", "point_charge", "c0", "spread", "conclusive"),
              [(fit.m_liminf, fit.m_excluded_limit, fit.point_charge, fit.c0, fit.spread, fit.conclusive)])
    out.plot("m_ladder.svg", {"m(r)": ([r[2] for r in rows], [r[3] for r in rows])},
             ("log r", "m(r)", "singular coefficient ladder"))


def _blowup(cfg: ExperimentConfig, out: Artifacts) -> None:
    from nlpotlab.thinness import blowup_measure
    from nlpotlab.wolff import WolffParams, singular_ratio

    p = cfg.params
    n = p["n"]
    fam = nio.parse_family(p["family"][0], n)
    res = blowup_measure(fam, p["p"], p["m"], (p["i_min"], p["i_max"]), ball_cells=p["ball_cells"])
    params = WolffParams(p["p"], n, r0=p["r0"])
    generic = -np.eye(n)[0]
    rows = []
    for i, w, mass in zip(res.indices, res.weights, res.piece_masses):
        e_pt = np.zeros(n)
        e_pt[0] = 0.75 * 2.0 ** (-int(i))
        g_pt = 0.75 * 2.0 ** (-int(i)) * generic
        rows.append((int(i), w, mass, singular_ratio(res.measure, params, e_pt),
                     singular_ratio(res.measure, params, g_pt)))
    out.table("blowup.csv", ("i", "weight", "piece_mass", "ratio_on_set", "ratio_generic"), rows)
    out.extra["blowup_measure.txt"] = res.measure
    out.plot("blowup.svg", {"on the set": ([r[0] for r in rows], [r[3] for r in rows]),
                            "generic ray": ([r[0] for r in rows], [r[4] for r in rows])},
             ("annulus i", "singular ratio", "blow-up along the thin set"))


def _cones(cfg: ExperimentConfig, out: Artifacts) -> None:
    from nlpotlab.cones import p_gamma_k

    rows = [(n, k, float(p_gamma_k(n, k))) for n, k in _cone_pairs(cfg.params)]
    out.table("cones.csv", ("n", "k", "p_gamma"), rows)


RUNNERS: dict = {
    "wolff-asymptotics": _wolff,
    "capacity-study": _capacity,
    "thinness-study": _thinness,
    "plaplace-asymptotics": _plaplace,
    "blowup": _blowup,
    "cones": _cones,
}


def execute(cfg: ExperimentConfig) -> Artifacts:
    out = Artifacts()
    RUNNERS[cfg.kind](cfg, out)
    return out


def write_artifacts(cfg: ExperimentConfig, out: Artifacts) -> list:
    cfg.output.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in out.tables.items():
        write_csv(cfg.output / name, header, rows)
        written.append(cfg.output / name)
    for name, series, axes in out.plots:
        emit_plot(series, axes, cfg.output / name)
        written.append(cfg.output / name)
    for name, mu in out.extra.items():
        nio.write_measure(mu, cfg.output / name)
        written.append(cfg.output / name)
    return written


def run(config, stream=None) -> int:
    """Run a config (path or :class:`ExperimentConfig`) and return the exit status."""
    from nlpotlab.capacity import ConvergenceError

    stream = sys.stderr if stream is None else stream
    try:
        cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
        out = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=stream)
        return EXIT_NONCONVERGED
    try:
        write_artifacts(cfg, out)
    except OSError as exc:
        print(f"config error: cannot write outputs: {exc}", file=stream)
        return EXIT_CONFIG
    if not out.converged:
        print("solver did not converge; see the converged column", file=stream)
        return EXIT_NONCONVERGED
    return EXIT_OK
