"""Finite nonnegative Radon measures built from atoms, radial profiles and grid cells.

Ball masses use the closed-ball convention: an atom lying exactly on the
sphere ``|p - x| = t`` is counted in ``mu(B(x, t))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Iterable, Optional

import numpy as np
from scipy.special import betainc, gamma

_GAUSS_T, _GAUSS_W = np.polynomial.legendre.leggauss(96)
_GAUSS_T = 0.5 * (_GAUSS_T + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


def ball_volume(n: int, r: float = 1.0) -> float:
    return sphere_area(n) / n * r**n


def cap_fraction(n: int, cos_theta):
    """Fraction of S^{n-1} within polar angle ``arccos(cos_theta)`` of a pole."""
    c = np.clip(np.asarray(cos_theta, dtype=float), -1.0, 1.0)
    if n == 2:
        return np.arccos(c) / math.pi
    if n == 3:
        return 0.5 * (1.0 - c)
    half = 0.5 * betainc(0.5 * (n - 1), 0.5, 1.0 - c * c)
    return np.where(c >= 0.0, half, 1.0 - half)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Uniform Cartesian node grid on a box.

    ``mirror[k]`` declares the lower face of axis ``k`` a reflection plane:
    the grid then stores one half of a domain that is symmetric under
    ``x_k -> 2*lower_k - x_k``, and nodes on that face are interior nodes.
    ``holes`` marks extra Dirichlet nodes (exterior of a ball, inner holes).
    """

    lower: np.ndarray
    cells: tuple
    h: float
    mirror: tuple = ()
    holes: Optional[np.ndarray] = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        cells = tuple(int(c) for c in self.cells)
        if len(cells) != lower.size:
            raise ValueError("lower corner and cells_per_axis disagree in dimension")
        if not 2 <= len(cells) <= 4:
            raise ValueError("grid dimension must be 2, 3 or 4")
        if any(c < 1 for c in cells):
            raise ValueError("cells_per_axis must be positive")
        if not self.h > 0:
            raise ValueError("spacing must be positive")
        mirror = tuple(bool(m) for m in self.mirror) or (False,) * len(cells)
        if len(mirror) != len(cells):
            raise ValueError("mirror flags must match the dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "mirror", mirror)
        if self.holes is not None:
            holes = np.asarray(self.holes, dtype=bool)
            if holes.shape != self.node_shape:
                raise ValueError("holes mask must have one entry per node")
            object.__setattr__(self, "holes", holes)

    @classmethod
    def from_box(cls, lower, upper, cells, mirror=(), holes=None) -> "GridDomain":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        cells = np.broadcast_to(np.asarray(cells, dtype=int), lower.shape)
        spacing = (upper - lower) / cells
        if not np.allclose(spacing, spacing[0], rtol=1e-10, atol=0.0):
            raise ValueError(f"non-uniform spacing across axes: {spacing}")
        return cls(lower, tuple(cells), float(spacing[0]), tuple(mirror), holes)

    @classmethod
    def cube(cls, half_width: float, cells: int, dim: int, octant: bool = False) -> "GridDomain":
        """``[-L, L]^dim``, or its positive orthant with mirror planes when ``octant``."""
        if octant:
            return cls.from_box(np.zeros(dim), np.full(dim, half_width), cells, (True,) * dim)
        return cls.from_box(np.full(dim, -half_width), np.full(dim, half_width), cells)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.h * np.asarray(self.cells)

    @property
    def node_shape(self) -> tuple:
        return tuple(c + 1 for c in self.cells)

    @property
    def mirror_factor(self) -> int:
        """Number of copies of the stored region in the unfolded domain."""
        return 2 ** sum(self.mirror)

    def axes(self) -> list:
        return [self.lower[k] + self.h * np.arange(self.cells[k] + 1) for k in range(self.dim)]

    def node_coords(self) -> tuple:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def points(self) -> np.ndarray:
        return np.stack([c.ravel() for c in self.node_coords()], axis=1)

    def radius(self, center=None) -> np.ndarray:
        """Nodal distance to ``center`` (origin by default)."""
        center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        return np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(self.node_coords(), center)))

    @cached_property
    def plane_count(self) -> np.ndarray:
        """Number of mirror planes each node lies on."""
        count = np.zeros(self.node_shape, dtype=np.int8)
        for k, m in enumerate(self.mirror):
            if m:
                idx = [slice(None)] * self.dim
                idx[k] = 0
                count[tuple(idx)] += 1
        return count

    @cached_property
    def node_weight(self) -> np.ndarray:
        """Share of a node's full control volume held by the stored region."""
        return 0.5 ** self.plane_count.astype(float)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.node_shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = -1
            mask[tuple(idx)] = True
            if not self.mirror[k]:
                idx[k] = 0
                mask[tuple(idx)] = True
        if self.holes is not None:
            mask |= self.holes
        return mask

    def with_holes(self, holes) -> "GridDomain":
        holes = np.asarray(holes, dtype=bool)
        if self.holes is not None:
            holes = holes | self.holes
        return GridDomain(self.lower, self.cells, self.h, self.mirror, holes)

    def fold(self, points) -> np.ndarray:
        """Map points of the unfolded domain into the stored region."""
        pts = np.array(points, dtype=float, ndmin=2)
        for k, m in enumerate(self.mirror):
            if m:
                pts[:, k] = self.lower[k] + np.abs(pts[:, k] - self.lower[k])
        return pts

    def orbit_distance(self, x) -> np.ndarray:
        """Distance from ``x`` to the nearest mirror image of every node."""
        x = np.asarray(x, dtype=float)
        total = 0.0
        for k, c in enumerate(self.node_coords()):
            diff = np.abs(c - x[k])
            if self.mirror[k]:
                diff = np.minimum(diff, np.abs(2.0 * self.lower[k] - c - x[k]))
            total = total + diff**2
        return np.sqrt(total)

    def unfold(self, values) -> np.ndarray:
        """Nodal array of the full grid, reflecting across mirror planes."""
        out = np.asarray(values)
        for k, m in enumerate(self.mirror):
            if m:
                idx = [slice(None)] * self.dim
                idx[k] = slice(None, 0, -1)
                out = np.concatenate([out[tuple(idx)], out], axis=k)
        return out

    def unfolded(self) -> "GridDomain":
        lower = self.lower.copy()
        cells = list(self.cells)
        for k, m in enumerate(self.mirror):
            if m:
                lower[k] -= self.h * self.cells[k]
                cells[k] *= 2
        holes = None if self.holes is None else self.unfold(self.holes)
        return GridDomain(lower, tuple(cells), self.h, (), holes)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = self.fold(points)
        lo = self.lower - tol * self.h
        hi = self.upper + tol * self.h
        return np.all((pts >= lo) & (pts <= hi), axis=1)


# ---------------------------------------------------------------------------
# Measure components
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Atom:
    point: np.ndarray
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).reshape(-1))
        object.__setattr__(self, "mass", float(self.mass))
        if not self.mass >= 0:
            raise ValueError("atom mass must be nonnegative")


@dataclass(frozen=True, eq=False)
class RadialPart:
    """Radially symmetric density ``rho(|x - center|)`` sampled on ``radii``.

    Linear interpolation between samples and zero beyond the last radius.
    """

    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if radii.size < 2 or radii.size != values.size:
            raise ValueError("radial profile needs at least two (radius, value) samples")
        if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
            raise ValueError("profile radii must start at 0 and increase")
        if np.any(values < 0):
            raise ValueError("profile values must be nonnegative")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, center, radius: float, density: float = 1.0) -> "RadialPart":
        return cls(center, [0.0, radius], [density, density])

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def r_max(self) -> float:
        return float(self.radii[-1])

    def density(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= self.r_max, np.interp(s, self.radii, self.values), 0.0)

    @cached_property
    def _segment_masses(self) -> np.ndarray:
        n = self.dim
        a, b = self.radii[:-1], self.radii[1:]
        slope = np.diff(self.values) / np.diff(self.radii)
        offset = self.values[:-1] - slope * a
        seg = offset * (b**n - a**n) / n + slope * (b ** (n + 1) - a ** (n + 1)) / (n + 1)
        return sphere_area(n) * seg

    @property
    def mass(self) -> float:
        return float(self._segment_masses.sum())

    def cumulative_mass(self, s):
        """Mass inside the ball of radius ``s`` about the center (exact)."""
        n = self.dim
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.r_max)
        k = np.clip(np.searchsorted(self.radii, s, side="right") - 1, 0, self.radii.size - 2)
        before = np.concatenate([[0.0], np.cumsum(self._segment_masses)])[k]
        a = self.radii[k]
        slope = (self.values[k + 1] - self.values[k]) / (self.radii[k + 1] - a)
        offset = self.values[k] - slope * a
        part = offset * (s**n - a**n) / n + slope * (s ** (n + 1) - a ** (n + 1)) / (n + 1)
        return before + sphere_area(n) * part

    def ball_mass(self, x, t):
        """``mu(B(x, t))`` by 1-D quadrature of the profile over spherical caps."""
        n = self.dim
        t = np.asarray(t, dtype=float)
        d = float(np.linalg.norm(np.asarray(x, dtype=float) - self.center))
        if d == 0.0:
            return self.cumulative_mass(t)
        full = self.cumulative_mass(np.maximum(t - d, 0.0))
        lo = np.abs(d - t)
        hi = np.minimum(d + t, self.r_max)
        live = hi > lo
        if not np.any(live):
            return full
        lo_l = lo[live] if lo.ndim else lo
        hi_l = hi[live] if hi.ndim else hi
        tt = t[live] if t.ndim else t
        lo_l, hi_l, tt = (np.atleast_1d(v)[:, None] for v in (lo_l, hi_l, tt))
        # cosine clustering tames the square-root behaviour at both cap edges
        span = hi_l - lo_l
        s = lo_l + span * 0.5 * (1.0 - np.cos(math.pi * _GAUSS_T))
        ds = span * 0.5 * math.pi * np.sin(math.pi * _GAUSS_T)
        cos_theta = (s * s + d * d - tt * tt) / (2.0 * s * d)
        integrand = self.density(s) * s ** (n - 1) * cap_fraction(n, cos_theta) * ds
        partial = sphere_area(n) * (integrand @ _GAUSS_W)
        out = np.array(full, dtype=float, copy=True)
        if out.ndim:
            out[live] += partial
            return out
        return float(out + partial[0])


@dataclass(frozen=True, eq=False)
class GridPart:
    """Cell masses on an (unmirrored) grid; each cell is spread uniformly."""

    domain: GridDomain
    cell_masses: np.ndarray

    def __post_init__(self):
        masses = np.asarray(self.cell_masses, dtype=float)
        if masses.shape != tuple(self.domain.cells):
            raise ValueError("one mass per cell is required")
        if np.any(masses < 0):
            raise ValueError("cell masses must be nonnegative")
        if any(self.domain.mirror):
            raise ValueError("grid parts live on unmirrored grids")
        object.__setattr__(self, "cell_masses", masses)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def mass(self) -> float:
        return float(self.cell_masses.sum())

    @cached_property
    def subpoints(self) -> tuple:
        """Positions and masses of the 2^dim subsample points of charged cells.

        A ball covering ``j`` of a cell's subpoints receives ``j/2^dim`` of its
        mass; fully covered cells are therefore counted exactly.
        """
        dom = self.domain
        idx = np.argwhere(self.cell_masses > 0)
        centers = dom.lower + dom.h * (idx + 0.5)
        offsets = np.array(list(product((-0.25, 0.25), repeat=dom.dim))) * dom.h
        pts = (centers[:, None, :] + offsets[None, :, :]).reshape(-1, dom.dim)
        share = self.cell_masses[tuple(idx.T)] / len(offsets)
        return pts, np.repeat(share, len(offsets))


# ---------------------------------------------------------------------------
# The measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadonMeasure:
    dim: int
    atoms: tuple = ()
    radial_parts: tuple = ()
    grid_parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "radial_parts", tuple(self.radial_parts))
        object.__setattr__(self, "grid_parts", tuple(self.grid_parts))
        for a in self.atoms:
            if a.point.size != self.dim:
                raise ValueError("atom dimension mismatch")
        for part in self.radial_parts + self.grid_parts:
            if part.dim != self.dim:
                raise ValueError("component dimension mismatch")

    @classmethod
    def dirac(cls, point, mass: float = 1.0) -> "RadonMeasure":
        point = np.asarray(point, dtype=float)
        return cls(point.size, (Atom(point, mass),))

    @classmethod
    def zero(cls, dim: int) -> "RadonMeasure":
        return cls(dim)

    def __add__(self, other: "RadonMeasure") -> "RadonMeasure":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return RadonMeasure(
            self.dim,
            self.atoms + other.atoms,
            self.radial_parts + other.radial_parts,
            self.grid_parts + other.grid_parts,
        )

    def scaled(self, c: float) -> "RadonMeasure":
        """The measure ``c * mu`` for ``c >= 0``."""
        if c < 0:
            raise ValueError("scale factor must be nonnegative")
        return RadonMeasure(
            self.dim,
            tuple(Atom(a.point, c * a.mass) for a in self.atoms),
            tuple(RadialPart(r.center, r.radii, c * r.values) for r in self.radial_parts),
            tuple(GridPart(g.domain, c * g.cell_masses) for g in self.grid_parts),
        )

    @property
    def total_mass(self) -> float:
        return (
            sum(a.mass for a in self.atoms)
            + sum(r.mass for r in self.radial_parts)
            + sum(g.mass for g in self.grid_parts)
        )

    @property
    def is_empty(self) -> bool:
        return self.total_mass == 0.0

    def atom_mass_at(self, x, tol: float = 0.0) -> float:
        x = np.asarray(x, dtype=float)
        return float(sum(a.mass for a in self.atoms if np.linalg.norm(a.point - x) <= tol))

    def is_radial_about(self, center) -> bool:
        center = np.asarray(center, dtype=float)
        return not self.grid_parts and all(
            np.array_equal(a.point, center) for a in self.atoms if a.mass > 0
        ) and all(np.array_equal(r.center, center) for r in self.radial_parts)

    def jumps(self, x) -> tuple:
        """Sorted distances from ``x`` and masses of all point-like charges.

        Atoms and grid subsample points make ``t -> mu(B(x, t))`` a step
        function; radial parts contribute the continuous remainder.
        """
        x = np.asarray(x, dtype=float)
        dists = [np.array([np.linalg.norm(a.point - x) for a in self.atoms])]
        masses = [np.array([a.mass for a in self.atoms])]
        for g in self.grid_parts:
            pts, m = g.subpoints
            dists.append(np.linalg.norm(pts - x, axis=1))
            masses.append(m)
        d = np.concatenate(dists) if dists else np.empty(0)
        m = np.concatenate(masses) if masses else np.empty(0)
        keep = m > 0
        d, m = d[keep], m[keep]
        order = np.argsort(d, kind="stable")
        return d[order], m[order]

    def continuous_ball_mass(self, x, t):
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t)
        for r in self.radial_parts:
            total = total + r.ball_mass(x, t)
        return total

    def ball_mass(self, x, t):
        return ball_mass(self, x, t)


def ball_mass(mu: RadonMeasure, x, t):
    """``mu(B(x, t))`` for the closed ball; ``t`` may be a scalar or an array."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("radius must be nonnegative")
    d, m = mu.jumps(x)
    # tiny relative slack keeps an atom placed exactly on the sphere counted
    cum = np.concatenate([[0.0], np.cumsum(m)])
    stepped = cum[np.searchsorted(d, t_arr * (1.0 + 1e-13), side="right")]
    out = stepped + mu.continuous_ball_mass(x, t_arr)
    return float(out) if np.ndim(t) == 0 else out


def sphere_mass(mu: RadonMeasure, x, t: float, rtol: float = 1e-12) -> float:
    """Mass of the point-like charges lying on the sphere ``|y - x| = t``."""
    d, m = mu.jumps(x)
    return float(m[np.abs(d - t) <= rtol * max(t, 1e-300)].sum())


def rescale_measure(mu: RadonMeasure, r: float) -> RadonMeasure:
    """The measure ``mu_r`` with ``mu_r(A) = mu(rA)``.

    Atoms move ``p -> p/r``; densities are pulled back and multiplied by
    ``r^n``; grid cells shrink with unchanged masses.
    """
    if not r > 0:
        raise ValueError("scale must be positive")
    n = mu.dim
    atoms = tuple(Atom(a.point / r, a.mass) for a in mu.atoms)
    radial = tuple(
        RadialPart(p.center / r, p.radii / r, p.values * r**n) for p in mu.radial_parts
    )
    grids = tuple(
        GridPart(GridDomain(g.domain.lower / r, g.domain.cells, g.domain.h / r), g.cell_masses)
        for g in mu.grid_parts
    )
    return RadonMeasure(n, atoms, radial, grids)


# ---------------------------------------------------------------------------
# Dyadic annuli
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DyadicAnnuli:
    """``omega_i = {2^{-i-1} <= |x - x0| <= 2^{-i}}`` and the thickened
    ``Omega_i = {2^{-i-2} <= |x - x0| <= 2^{-i+1}}`` for ``i_min <= i <= i_max``."""

    center: np.ndarray
    i_min: int
    i_max: int

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if self.i_max < self.i_min:
            raise ValueError("empty index range")

    @property
    def indices(self) -> range:
        return range(self.i_min, self.i_max + 1)

    def _check(self, i: int):
        if not self.i_min <= i <= self.i_max:
            raise IndexError(f"annulus index {i} outside [{self.i_min}, {self.i_max}]")

    def omega(self, i: int) -> tuple:
        self._check(i)
        return 2.0 ** (-i - 1), 2.0 ** (-i)

    def Omega(self, i: int) -> tuple:
        self._check(i)
        return 2.0 ** (-i - 2), 2.0 ** (-i + 1)

    def in_omega(self, points, i: int) -> np.ndarray:
        lo, hi = self.omega(i)
        r = np.linalg.norm(np.atleast_2d(points) - self.center, axis=1)
        return (r >= lo) & (r <= hi)

    def in_Omega(self, points, i: int) -> np.ndarray:
        lo, hi = self.Omega(i)
        r = np.linalg.norm(np.atleast_2d(points) - self.center, axis=1)
        return (r >= lo) & (r <= hi)


def annulus_mass(mu: RadonMeasure, annuli: DyadicAnnuli, i: int) -> float:
    """``mu(Omega_i(x0))`` for the closed shell."""
    lo, hi = annuli.Omega(i)
    x0 = annuli.center
    outer = ball_mass(mu, x0, hi)
    inner = ball_mass(mu, x0, lo)
    return max(outer - inner + sphere_mass(mu, x0, lo), 0.0)


def omega_mass(mu: RadonMeasure, annuli: DyadicAnnuli, i: int) -> float:
    """``mu(omega_i(x0))`` for the closed shell."""
    lo, hi = annuli.omega(i)
    x0 = annuli.center
    return max(ball_mass(mu, x0, hi) - ball_mass(mu, x0, lo) + sphere_mass(mu, x0, lo), 0.0)


def as_points(points: Iterable, dim: int) -> np.ndarray:
    pts = np.array(points, dtype=float, ndmin=2)
    if pts.shape[1] != dim:
        raise ValueError(f"expected {dim}-dimensional points")
    return pts


def unit_vector(dim: int, axis: int = 0) -> np.ndarray:
    e = np.zeros(dim)
    e[axis] = 1.0
    return e


def measure_from_nodal(domain: GridDomain, nodal: np.ndarray) -> RadonMeasure:
    """Grid part whose cells are the dual cells centred at the (unfolded) nodes."""
    full = domain.unfolded()
    values = domain.unfold(nodal)
    dual = GridDomain(full.lower - 0.5 * full.h, tuple(s for s in full.node_shape), full.h)
    return RadonMeasure(full.dim, grid_parts=(GridPart(dual, values),))
