"""Plain-text file formats and command-line spec strings.

Measure file, one component per line (``#`` starts a comment)::

    atom x y [z [w]] mass
    radial cx cy [cz [cw]] table r0:v0,r1:v1,...
    grid path/to/cells.txt

Cell file (``grid`` records) and field file share one layout::

    dim 3
    lower -1 -1 -1
    upper 1 1 1
    cells 8 8 8
    values
    <one value per cell (cell file) or per node (field file), row-major>

Field files always hold the unfolded grid.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import numpy as np

from nlpotlab.measures import Atom, GridDomain, GridPart, RadialPart, RadonMeasure


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------


def _floats(tokens, what: str, path, lineno: int) -> list:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise FormatError(f"{path}:{lineno}: bad number in {what} record") from None


def read_measure(path, dim: Optional[int] = None) -> RadonMeasure:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"measure file not found: {path}")
    atoms, radial, grids = [], [], []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "atom":
            vals = _floats(rest, "atom", path, lineno)
            if not 3 <= len(vals) <= 5:
                raise FormatError(f"{path}:{lineno}: atom needs 2-4 coordinates and a mass")
            atoms.append(Atom(vals[:-1], vals[-1]))
        elif head == "radial":
            if "table" not in rest:
                raise FormatError(f"{path}:{lineno}: radial record needs a table")
            k = rest.index("table")
            center = _floats(rest[:k], "radial", path, lineno)
            table = "".join(rest[k + 1 :])
            try:
                pairs = [tuple(float(x) for x in item.split(":")) for item in table.split(",") if item]
                radii, values = zip(*pairs)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: table entries are r:value pairs") from None
            radial.append(RadialPart(center, radii, values))
        elif head == "grid":
            if len(rest) != 1:
                raise FormatError(f"{path}:{lineno}: grid record takes one path")
            cell_path = Path(rest[0])
            if not cell_path.is_absolute():
                cell_path = path.parent / cell_path
            dom, values = read_grid_file(cell_path, per="cell")
            grids.append(GridPart(dom, values))
        else:
            raise FormatError(f"{path}:{lineno}: unknown record {head!r}")
    dims = {a.point.size for a in atoms} | {r.dim for r in radial} | {g.dim for g in grids}
    if dim is not None:
        dims.add(dim)
    if len(dims) > 1:
        raise FormatError(f"{path}: components disagree in dimension {sorted(dims)}")
    if not dims:
        raise FormatError(f"{path}: empty measure needs an explicit dimension")
    return RadonMeasure(dims.pop(), atoms, radial, grids)


def write_measure(mu: RadonMeasure, path, cell_dir: Optional[Path] = None) -> None:
    """Write ``mu``; grid parts go to sibling cell files ``<stem>.gridK.txt``."""
    path = Path(path)
    cell_dir = path.parent if cell_dir is None else Path(cell_dir)
    lines = [f"# measure in R^{mu.dim}, total mass {mu.total_mass!r}"]
    for a in mu.atoms:
        lines.append("atom " + " ".join(repr(float(x)) for x in a.point) + f" {a.mass!r}")
    for r in mu.radial_parts:
        table = ",".join(f"{float(x)!r}:{float(v)!r}" for x, v in zip(r.radii, r.values))
        lines.append("radial " + " ".join(repr(float(x)) for x in r.center) + " table " + table)
    for k, g in enumerate(mu.grid_parts):
        cell_path = cell_dir / f"{path.stem}.grid{k}.txt"
        write_grid_file(cell_path, g.domain, g.cell_masses)
        rel = cell_path.name if cell_dir == path.parent else str(cell_path)
        lines.append(f"grid {rel}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Grid files
# ---------------------------------------------------------------------------


def write_grid_file(path, domain: GridDomain, values) -> None:
    values = np.asarray(values, dtype=float)
    lines = [
        f"dim {domain.dim}",
        "lower " + " ".join(repr(float(x)) for x in domain.lower),
        "upper " + " ".join(repr(float(x)) for x in domain.upper),
        "cells " + " ".join(str(c) for c in domain.cells),
        "values",
    ]
    lines.extend(repr(float(v)) for v in values.ravel(order="C"))
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_file(path, per: str = "node") -> tuple:
    """``(domain, values)`` with ``values`` shaped per cell or per node."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"grid file not found: {path}")
    header = {}
    lines = path.read_text().split("\n")
    k = 0
    while k < len(lines):
        line = lines[k].split("#", 1)[0].strip()
        k += 1
        if not line:
            continue
        if line == "values":
            break
        key, *rest = line.split()
        header[key] = rest
    for key in ("dim", "lower", "upper", "cells"):
        if key not in header:
            raise FormatError(f"{path}: missing header field {key!r}")
    try:
        dim = int(header["dim"][0])
        lower = [float(x) for x in header["lower"]]
        upper = [float(x) for x in header["upper"]]
        cells = [int(x) for x in header["cells"]]
        values = np.array([float(x) for x in " ".join(lines[k:]).split()])
    except ValueError:
        raise FormatError(f"{path}: malformed grid file") from None
    if not len(lower) == len(upper) == len(cells) == dim:
        raise FormatError(f"{path}: header fields disagree with dim {dim}")
    dom = GridDomain.from_box(lower, upper, cells)
    shape = tuple(cells) if per == "cell" else dom.node_shape
    if values.size != int(np.prod(shape)):
        raise FormatError(f"{path}: expected {int(np.prod(shape))} values, found {values.size}")
    return dom, values.reshape(shape)


def write_field(path, domain: GridDomain, values) -> None:
    """Nodal dump of the unfolded field."""
    if any(domain.mirror):
        values = domain.unfold(values)
        domain = domain.unfolded()
    write_grid_file(path, domain, values)


def read_field(path) -> tuple:
    return read_grid_file(path, per="node")


def read_points(path, dim: Optional[int] = None) -> np.ndarray:
    """Whitespace- or comma-separated coordinates, one point per line."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"points file not found: {path}")
    rows = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if line:
            rows.append(_floats(line.split(), "point", path, lineno))
    if not rows:
        raise FormatError(f"{path}: no points")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or (dim is not None and widths != {dim}):
        raise FormatError(f"{path}: inconsistent point dimension")
    return np.asarray(rows)


# ---------------------------------------------------------------------------
# Spec strings
# ---------------------------------------------------------------------------


def _spec_parts(spec: str) -> tuple:
    kind, _, rest = spec.partition(":")
    args = [a for a in rest.split(":") if a] if rest else []
    return kind.strip().lower(), args


def parse_domain(spec: str, dim: int, cells: int, octant: bool = False) -> GridDomain:
    """``ball:R``, ``cube:L`` (alias ``box``) or ``shell:r:R`` (alias ``annulus``), centred at the origin."""
    from nlpotlab.capacity import ball_domain, shell_domain

    kind, args = _spec_parts(spec)
    try:
        vals = [float(a) for a in args]
    except ValueError:
        raise FormatError(f"bad domain spec {spec!r}") from None
    if kind == "ball" and len(vals) == 1:
        return ball_domain(vals[0], cells, dim, octant=octant)
    if kind in ("cube", "box") and len(vals) == 1:
        return GridDomain.cube(vals[0], cells, dim, octant=octant)
    if kind in ("shell", "annulus") and len(vals) == 2:
        return shell_domain(vals[0], vals[1], cells, dim, octant=octant)
    raise FormatError(f"bad domain spec {spec!r}; use ball:R, cube:L or shell:r:R")


def parse_inner(spec: str, domain: GridDomain) -> np.ndarray:
    """Node mask from ``ball:r[:c1,c2,...]``, ``box:a``, ``shell:a:b`` (alias ``annulus``) or ``mask:FILE``."""
    kind, args = _spec_parts(spec)
    if kind == "mask":
        if len(args) != 1:
            raise FormatError("mask spec is mask:FILE")
        dom, values = read_field(args[0])
        full = domain.unfolded() if any(domain.mirror) else domain
        if dom.node_shape != full.node_shape:
            raise FormatError("mask file does not match the domain grid")
        mask = values > 0.5
        if any(domain.mirror):
            idx = tuple(slice(c, None) if m else slice(None) for c, m in zip(domain.cells, domain.mirror))
            mask = mask[idx]
        return mask
    try:
        if kind == "ball" and len(args) in (1, 2):
            center = None
            if len(args) == 2:
                center = np.array([float(x) for x in args[1].split(",")])
            return domain.radius(center) <= float(args[0]) * (1.0 + 1e-12)
        if kind == "box" and len(args) == 1:
            a = float(args[0])
            return np.all([np.abs(c) <= a * (1.0 + 1e-12) for c in domain.node_coords()], axis=0)
        if kind in ("shell", "annulus") and len(args) == 2:
            r = domain.radius()
            return (r >= float(args[0]) * (1 - 1e-12)) & (r <= float(args[1]) * (1 + 1e-12))
    except ValueError:
        pass
    raise FormatError(f"bad inner spec {spec!r}; use ball:r[:c], box:a, shell:a:b or mask:FILE")


def parse_family(spec: str, n: int):
    """``empty``, ``full_annuli``, ``ray_segment``, ``power:EXP`` or ``log:EXP``."""
    from nlpotlab.thinness import SetFamily

    kind, args = _spec_parts(spec)
    if kind in ("empty", "full_annuli", "ray_segment") and not args:
        return SetFamily(kind, n, label=kind)
    try:
        if kind == "power" and len(args) == 1:
            return SetFamily.power_chain(n, float(args[0]))
        if kind == "log" and len(args) == 1:
            e = float(args[0])
            return SetFamily.ball_chain(n, lambda i: math.log(2.0 + i) ** (-e), label=f"ball_chain(log^-{e:g})")
    except ValueError:
        pass
    raise FormatError(f"bad family spec {spec!r}")
